"""Server-side transports: in-process queues and TCP sockets.

Both move encoded frames (bytes), so a simulated run exercises exactly the
serialization a networked run does.
"""
from __future__ import annotations

import logging
import queue
import socket
import threading

from .client import FederatedClient
from .wire import ProtocolError, RoundMessage, Tag, decode_message, read_message, write_message

log = logging.getLogger(__name__)


def parse_address(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep:
        raise ValueError(f"address must be host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


class SimTransport:
    """Clients live in this process; frames travel through queues.

    With ``threaded=True`` each client runs in its own worker thread,
    otherwise a client handles a frame as soon as it is sent. ``tap`` is
    called as ``tap(direction, frame_bytes)`` for every frame, with
    direction ``"up"`` (client to server) or ``"down"``.
    """

    def __init__(self, clients, threaded: bool = False, tap=None):
        self.clients = {c.client_id: c for c in clients}
        if len(self.clients) != len(clients):
            raise ValueError("duplicate client ids")
        self.threaded = threaded
        self.tap = tap
        self._inbox: queue.Queue = queue.Queue()
        self._client_queues: dict[str, queue.Queue] = {}
        self._threads: list[threading.Thread] = []
        for cid in sorted(self.clients):
            self._push_up(self.clients[cid].register_message())
        if threaded:
            for cid in sorted(self.clients):
                q: queue.Queue = queue.Queue()
                self._client_queues[cid] = q
                t = threading.Thread(target=self._worker, args=(cid, q), daemon=True)
                t.start()
                self._threads.append(t)

    def _push_up(self, msg: RoundMessage) -> None:
        frame = msg.encode()
        if self.tap:
            self.tap("up", frame)
        self._inbox.put(frame)

    def _deliver(self, cid: str, frame: bytes) -> None:
        reply = self.clients[cid].handle(decode_message(frame))
        if reply is not None:
            self._push_up(reply)

    def _worker(self, cid: str, q: queue.Queue) -> None:
        while True:
            frame = q.get()
            if frame is None:
                return
            try:
                self._deliver(cid, frame)
            except Exception as exc:   # surfaced to the server through recv()
                self._inbox.put(exc)
                return

    def send(self, client_id: str, msg: RoundMessage) -> None:
        if client_id not in self.clients:
            raise ProtocolError(f"no such client {client_id!r}")
        frame = msg.encode()
        if self.tap:
            self.tap("down", frame)
        if self.threaded:
            self._client_queues[client_id].put(frame)
        else:
            self._deliver(client_id, frame)

    def recv(self, timeout: float | None = None) -> RoundMessage:
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError("no message from any client") from None
        if isinstance(item, Exception):
            raise item
        return decode_message(item)

    def close(self) -> None:
        for q in self._client_queues.values():
            q.put(None)
        for t in self._threads:
            t.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class TcpServerTransport:
    """Accepts client connections; one reader thread per connection.

    A connection is bound to a client id by its first frame, which must be
    a REGISTER.
    """

    def __init__(self, address: str = "127.0.0.1:0"):
        host, port = parse_address(address)
        self._sock = socket.create_server((host, port))
        self._inbox: queue.Queue = queue.Queue()
        self._conns: dict[str, socket.socket] = {}
        self._lock = threading.Lock()
        self._closed = False
        self._acceptor = threading.Thread(target=self._accept_loop, daemon=True)
        self._acceptor.start()

    @property
    def address(self) -> str:
        host, port = self._sock.getsockname()[:2]
        return f"{host}:{port}"

    def _accept_loop(self) -> None:
        while not self._closed:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._reader, args=(conn,), daemon=True).start()

    def _reader(self, conn: socket.socket) -> None:
        cid = None
        try:
            while True:
                msg = read_message(conn)
                if cid is None:
                    if msg.tag is not Tag.REGISTER:
                        raise ProtocolError("first frame on a connection must be REGISTER")
                    cid = msg.client_id
                    with self._lock:
                        if cid in self._conns:
                            raise ProtocolError(f"client {cid!r} already connected")
                        self._conns[cid] = conn
                elif msg.client_id != cid:
                    raise ProtocolError(f"connection of {cid!r} sent a frame as {msg.client_id!r}")
                self._inbox.put(msg)
        except EOFError:
            pass
        except (ProtocolError, OSError) as exc:
            if not self._closed:
                self._inbox.put(exc if isinstance(exc, ProtocolError) else ProtocolError(str(exc)))
            conn.close()

    def send(self, client_id: str, msg: RoundMessage) -> None:
        with self._lock:
            conn = self._conns.get(client_id)
        if conn is None:
            raise ProtocolError(f"client {client_id!r} is not connected")
        write_message(conn, msg)

    def recv(self, timeout: float | None = None) -> RoundMessage:
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError("no message from any client") from None
        if isinstance(item, Exception):
            raise item
        return item

    def close(self) -> None:
        self._closed = True
        self._sock.close()
        with self._lock:
            for conn in self._conns.values():
                try:
                    conn.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_tcp_client(address: str, client: FederatedClient, connect_timeout: float = 30.0,
                   io_timeout: float | None = None) -> FederatedClient:
    """Connect, register, and serve GLOBAL frames until the server sends DONE."""
    host, port = parse_address(address)
    with socket.create_connection((host, port), timeout=connect_timeout) as sock:
        sock.settimeout(io_timeout)
        write_message(sock, client.register_message())
        while True:
            msg = read_message(sock)
            reply = client.handle(msg)
            if msg.tag is Tag.DONE:
                break
            if reply is not None:
                write_message(sock, reply)
    log.info("client %s finished after round %d", client.client_id, client.round)
    return client
