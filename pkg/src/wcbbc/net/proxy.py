"""A lossy UDP forwarder used to exercise retransmission locally."""
from __future__ import annotations

import asyncio
import random


class _Forward(asyncio.DatagramProtocol):
    def __init__(self, proxy: "LossyProxy", target: tuple):
        self.proxy = proxy
        self.target = target
        self.transport = None

    def connection_made(self, transport):
        self.transport = transport

    def datagram_received(self, data, addr):
        self.proxy.seen += 1
        if self.proxy.rng.random() < self.proxy.drop:
            self.proxy.dropped += 1
            return
        self.transport.sendto(data, self.target)


class LossyProxy:
    """Listens on one port per node and forwards to the node's real address.

    Every datagram is dropped independently with probability ``drop``.
    Nodes identify senders from the frame header, so replies need no
    address rewriting.
    """

    def __init__(self, routes: dict, drop: float = 0.3, seed: int = 0):
        if not 0.0 <= drop < 1.0:
            raise ValueError("drop probability must be in [0, 1)")
        self.routes = routes  # listen address -> node address
        self.drop = drop
        self.rng = random.Random(seed)
        self.seen = 0
        self.dropped = 0
        self._transports = []

    async def start(self) -> None:
        loop = asyncio.get_running_loop()
        for listen, target in self.routes.items():
            transport, _ = await loop.create_datagram_endpoint(lambda t=target: _Forward(self, t), local_addr=listen)
            self._transports.append(transport)

    def close(self) -> None:
        for t in self._transports:
            t.close()
        self._transports.clear()
