"""Minimal RFC 6455 WebSocket framing over a plain socket.

Covers what the streaming service and its clients need: the HTTP upgrade
handshake, text/binary messages, ping/pong, and close. Fragmented messages
are reassembled; extensions are not negotiated.
"""

from __future__ import annotations

import base64
import hashlib
import os
import socket
import struct

GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WsError(ConnectionError):
    pass


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise WsError("connection closed mid-frame")
        buf += chunk
    return buf


def read_http_head(sock: socket.socket, limit: int = 65536) -> bytes:
    # byte-wise read: must not consume beyond the header terminator, the
    # first websocket frame may already be queued behind it
    head = bytearray()
    while not head.endswith(b"\r\n\r\n"):
        chunk = sock.recv(1)
        if not chunk:
            raise WsError("connection closed during handshake")
        head += chunk
        if len(head) > limit:
            raise WsError("handshake too large")
    return bytes(head)


def parse_headers(head: bytes) -> dict[str, str]:
    lines = head.split(b"\r\n")
    headers = {}
    for line in lines[1:]:
        if b":" in line:
            k, v = line.split(b":", 1)
            headers[k.strip().decode().lower()] = v.strip().decode()
    return headers


def server_handshake(sock: socket.socket) -> None:
    head = read_http_head(sock)
    headers = parse_headers(head)
    key = headers.get("sec-websocket-key")
    if not key or "websocket" not in headers.get("upgrade", "").lower():
        sock.sendall(b"HTTP/1.1 400 Bad Request\r\n\r\n")
        raise WsError("not a websocket upgrade request")
    resp = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n\r\n"
    )
    sock.sendall(resp.encode())


def client_handshake(sock: socket.socket, host: str, port: int, path: str = "/") -> None:
    key = base64.b64encode(os.urandom(16)).decode()
    req = (
        f"GET {path} HTTP/1.1\r\n"
        f"Host: {host}:{port}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n\r\n"
    )
    sock.sendall(req.encode())
    head = read_http_head(sock)
    if b"101" not in head.split(b"\r\n", 1)[0]:
        raise WsError("server refused the websocket upgrade")
    headers = parse_headers(head)
    if headers.get("sec-websocket-accept") != accept_key(key):
        raise WsError("bad Sec-WebSocket-Accept")


def encode_frame(opcode: int, payload: bytes, mask: bool) -> bytes:
    head = bytearray([0x80 | opcode])
    n = len(payload)
    mask_bit = 0x80 if mask else 0
    if n < 126:
        head.append(mask_bit | n)
    elif n < 1 << 16:
        head.append(mask_bit | 126)
        head += struct.pack(">H", n)
    else:
        head.append(mask_bit | 127)
        head += struct.pack(">Q", n)
    if mask:
        key = os.urandom(4)
        head += key
        masked = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return bytes(head) + masked
    return bytes(head) + payload


def read_frame(sock: socket.socket) -> tuple[int, bytes, bool]:
    """One raw frame: (opcode, payload, fin)."""
    b0, b1 = _read_exact(sock, 2)
    fin = bool(b0 & 0x80)
    opcode = b0 & 0x0F
    masked = bool(b1 & 0x80)
    n = b1 & 0x7F
    if n == 126:
        (n,) = struct.unpack(">H", _read_exact(sock, 2))
    elif n == 127:
        (n,) = struct.unpack(">Q", _read_exact(sock, 8))
    key = _read_exact(sock, 4) if masked else None
    payload = _read_exact(sock, n) if n else b""
    if key:
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return opcode, payload, fin


def read_message(sock: socket.socket, respond_ping: bool = True, mask_replies: bool = False):
    """Next complete message: (opcode, payload) with opcode text/binary/close."""
    opcode = None
    buf = b""
    while True:
        op, payload, fin = read_frame(sock)
        if op == OP_PING:
            if respond_ping:
                sock.sendall(encode_frame(OP_PONG, payload, mask_replies))
            continue
        if op == OP_PONG:
            continue
        if op == OP_CLOSE:
            return OP_CLOSE, payload
        if op in (OP_TEXT, OP_BINARY):
            opcode = op
            buf = payload
        elif op == OP_CONT and opcode is not None:
            buf += payload
        else:
            raise WsError(f"unexpected opcode {op}")
        if fin:
            return opcode, buf


def send_text(sock: socket.socket, text: str, mask: bool = False) -> None:
    sock.sendall(encode_frame(OP_TEXT, text.encode(), mask))


def send_binary(sock: socket.socket, payload: bytes, mask: bool = False) -> None:
    sock.sendall(encode_frame(OP_BINARY, payload, mask))


def send_close(sock: socket.socket, mask: bool = False) -> None:
    try:
        sock.sendall(encode_frame(OP_CLOSE, b"", mask))
    except OSError:
        pass
