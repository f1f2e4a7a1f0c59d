"""Run n node processes on localhost, optionally behind a lossy proxy."""
from __future__ import annotations

import asyncio
import socket
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ..crypto import keygen, write_key_files
from .node import parse_result_line
from .proxy import LossyProxy

CRASH_EXIT = 70


@dataclass
class NodeRun:
    id: int
    returncode: int
    results: list
    stderr: str
    restarted: bool = False


@dataclass
class LocalRun:
    nodes: list
    frames_seen: int = 0
    frames_dropped: int = 0
    workdir: Optional[Path] = None

    def decisions(self) -> dict:
        """process -> [(value, round) per instance]"""
        return {nr.id: [(r["value"], r["round"]) for r in nr.results] for nr in self.nodes}


def free_ports(k: int) -> list[int]:
    socks = []
    try:
        for _ in range(k):
            s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            s.bind(("127.0.0.1", 0))
            socks.append(s)
        return [s.getsockname()[1] for s in socks]
    finally:
        for s in socks:
            s.close()


async def _run_node(argv: list, timeout: float):
    proc = await asyncio.create_subprocess_exec(
        *argv, stdout=asyncio.subprocess.PIPE, stderr=asyncio.subprocess.PIPE)
    try:
        out, err = await asyncio.wait_for(proc.communicate(), timeout)
    except asyncio.TimeoutError:
        proc.kill()
        out, err = await proc.communicate()
    return proc.returncode, out.decode(), err.decode()


async def _run_all(n, workdir, proposals, loss, seed, node_args, crash, timeout, startup):
    keydir = workdir / "keys"
    directory, pairs = keygen(n, seed=seed, scheme="ed25519")
    write_key_files(keydir, "ed25519", directory, pairs)
    real = free_ports(n)
    proxy = None
    if loss > 0:
        public = free_ports(n)
        proxy = LossyProxy({("127.0.0.1", p): ("127.0.0.1", r) for p, r in zip(public, real)}, loss, seed)
        await proxy.start()
    else:
        public = real
    peers = workdir / "peers.txt"
    peers.write_text("".join(f"127.0.0.1:{p}\n" for p in public))
    start_at = time.time() + startup

    def argv(i, extra=()):
        return [sys.executable, "-m", "wcbbc", "node", "--id", str(i), "--peers", str(peers),
                "--keys", str(keydir), "--listen", f"127.0.0.1:{real[i]}", "--proposal", str(proposals[i]),
                "--wal", str(workdir / f"node-{i}.wal"), "--start-at", f"{start_at:.6f}", "--seed", str(seed),
                *node_args, *extra]

    async def one(i):
        if crash is not None and crash[0] == i:
            code, out, err = await _run_node(argv(i, ("--exit-after-records", str(crash[1]))), timeout)
            if code != CRASH_EXIT:
                return NodeRun(i, code, _results(out), err)
            code, out, err2 = await _run_node(argv(i), timeout)
            return NodeRun(i, code, _results(out), err + err2, restarted=True)
        code, out, err = await _run_node(argv(i), timeout)
        return NodeRun(i, code, _results(out), err)

    try:
        nodes = await asyncio.gather(*(one(i) for i in range(n)))
    finally:
        if proxy is not None:
            proxy.close()
    run = LocalRun(list(nodes), workdir=workdir)
    if proxy is not None:
        run.frames_seen, run.frames_dropped = proxy.seen, proxy.dropped
    return run


def _results(stdout: str) -> list:
    return [parse_result_line(line) for line in stdout.splitlines() if line.startswith("instance=")]


def spawn_local(n: int, workdir, proposals: Sequence, loss: float = 0.0, seed: int = 0,
                node_args: Sequence[str] = (), crash: Optional[tuple] = None,
                timeout: float = 90.0, startup: float = 1.5) -> LocalRun:
    """Start ``n`` nodes as subprocesses and collect their result records.

    ``proposals`` holds one ``--proposal`` value per node.  ``crash=(i, k)``
    makes node i die after writing k log records and then restarts it from
    its log.
    """
    if len(proposals) != n:
        raise ValueError(f"need {n} proposals, got {len(proposals)}")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    return asyncio.run(_run_all(n, workdir, list(proposals), loss, seed, list(node_args), crash, timeout, startup))
