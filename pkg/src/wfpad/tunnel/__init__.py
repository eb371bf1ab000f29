"""Client/bridge transport: framing, sealing, handshake, proxies and replay."""
