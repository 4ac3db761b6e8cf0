"""Command-line entry points: ``du``, ``pubcsp-server`` and ``pricsp-server``.

``du`` prints a JSON result on stdout and a human summary on stderr.  On
failure the exit status is the protocol error code (see
:class:`dedupvault.errors.ErrorCode`).
"""

from __future__ import annotations

import argparse
import asyncio
import configparser
import json
import logging
import os
import sys
from pathlib import Path

from . import bench, config, messages, pre, symcrypto
from .errors import DedupVaultError
from .protocol.deployment import Deployment
from .protocol.du import DataUser
from .protocol.pricsp import PriCsp, load_or_create_keypair
from .protocol.pubcsp import PubCsp
from .rng import default_rng
from .store import PrivStore, PubStore, UserDirectory

log = logging.getLogger("dedupvault")

EXIT_INTERNAL = 70


# -- DU identity on disk -------------------------------------------------------


class Identity:
    """Keys and the local F_id -> H(F) catalog of one DU, kept as JSON."""

    def __init__(self, path: Path) -> None:
        self.path = path
        if path.exists():
            doc = json.loads(path.read_text(encoding="utf-8"))
        else:
            doc = {
                "u_id": default_rng.bytes(16).hex(),
                "sig_seed": default_rng.bytes(32).hex(),
                "pre_sk": pre.keygen1(bytes(16)).secret_bytes().hex(),
                "catalog": {},
            }
        self.doc = doc

    def user(self, cfg) -> DataUser:
        u_id = bytes.fromhex(self.doc["u_id"])
        du = DataUser(
            u_id,
            config=cfg,
            sig_keys=symcrypto.SigKeyPair.from_seed(bytes.fromhex(self.doc["sig_seed"])),
            pre_keys=pre.PreKeyPair.from_secret(u_id, bytes.fromhex(self.doc["pre_sk"])),
        )
        du.catalog = {bytes.fromhex(k): bytes.fromhex(v) for k, v in self.doc["catalog"].items()}
        return du

    def save(self, du: DataUser) -> None:
        self.doc["catalog"] = {k.hex(): v.hex() for k, v in du.catalog.items()}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_name(self.path.name + ".tmp")
        fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(self.doc, fh, indent=2)
        os.replace(tmp, self.path)


# -- running a flow ------------------------------------------------------------


class _InMemory:
    def __init__(self, root: Path, cfg) -> None:
        cluster = root / "cluster"
        keys = load_or_create_keypair(cluster / "pri" / "u0.key")
        self.dep = Deployment(cluster, config=cfg, pri_keypair=keys)

    def run(self, du: DataUser, start_name: str, *args):
        if du.address not in self.dep.net.actors:
            self.dep.attach_user(du, enroll=False)
        return self.dep.drive(du, getattr(du, start_name), *args)


class _Remote:
    def __init__(self, conf: config.Config) -> None:
        self.conf = conf

    def run(self, du: DataUser, start_name: str, *args):
        from .transport.tcp import TcpNode, run_flow

        async def go():
            node = TcpNode(du)
            try:
                await node.connect("pub", self.conf.pubcsp.host, self.conf.pubcsp.port)
                await node.connect("pri", self.conf.pricsp.host, self.conf.pricsp.port)
                timeout = self.conf.protocol.du_retry * self.conf.protocol.du_max_attempts
                return await run_flow(node, getattr(du, start_name), *args, timeout=timeout)
            finally:
                await node.close()

        return asyncio.run(go())


def _parse_ratios(text: str) -> list[float]:
    values = [float(v) for v in text.split(",") if v.strip()]
    if any(v > 1 for v in values):
        values = [v / 100 for v in values]
    return values


def _bench_config(args) -> bench.BenchConfig:
    cfg = bench.BenchConfig()
    if args.bench_config:
        cp = configparser.ConfigParser()
        with open(args.bench_config, encoding="utf-8") as fh:
            cp.read_file(fh)
        s = cp["bench"] if cp.has_section("bench") else {}
        if "ratios" in s:
            cfg.ratios = _parse_ratios(s["ratios"])
        for key in ("users", "file_size", "runs", "seed", "parallel"):
            if key in s:
                setattr(cfg, key, int(s[key]))
        if "file_sizes" in s:
            cfg.file_sizes = [int(v) for v in s["file_sizes"].split(",")]
        if "output" in s:
            cfg.output = s["output"]
    if args.ratios:
        cfg.ratios = _parse_ratios(args.ratios)
    for key in ("users", "runs", "seed", "parallel"):
        if getattr(args, key) is not None:
            setattr(cfg, key, getattr(args, key))
    if args.size is not None:
        cfg.file_size = args.size
    if args.out:
        cfg.output = args.out
    return cfg


def _cmd_bench(args) -> dict:
    cfg = _bench_config(args)
    report = bench.run_dedup_sweep(cfg)
    if args.table3:
        report.table3 = bench.table3_report()
    if args.phases:
        report.phases = bench.run_phase_timings(cfg)
    for row in report.sweep:
        print(f"ratio {row['ratio']:.0%}: blobs={row['blobs']} upload={row['upload_s']:.3f}s "
              f"dedup-check={row['dedup_check_s']:.3f}s", file=sys.stderr)
    if cfg.parallel > 1:
        print(f"{cfg.parallel} concurrent sessions: timings are not comparable to sequential runs",
              file=sys.stderr)
    print(f"reference at 100%: upload {bench.REFERENCE_UPLOAD_S} s, dedup {bench.REFERENCE_DEDUP_S} s "
          "(different hardware, not comparable)", file=sys.stderr)
    return report.as_dict()


def _du_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="du", description="Data-user client for the dedup vault.")
    p.add_argument("--config", help="INI file with server addresses and constants")
    p.add_argument("--data-dir", help="where identities (and the --in-memory cluster) live")
    p.add_argument("--identity", default="default", help="name of the local identity to use")
    p.add_argument("--in-memory", action="store_true", help="run all three actors in-process")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("enroll", help="register this identity with both CSPs")
    up = sub.add_parser("upload", help="upload a file (deduplicated if already stored)")
    up.add_argument("file")
    down = sub.add_parser("download", help="download a file by F_id")
    down.add_argument("file_id")
    down.add_argument("-o", "--output")
    rv = sub.add_parser("revoke", help="give up ownership of a file")
    rv.add_argument("file_id")
    rv.add_argument("--successor", help="u_id (hex) of the next owner, or 'pricsp'")
    b = sub.add_parser("bench", help="run the dedup-ratio sweep")
    b.add_argument("bench_config", nargs="?")
    b.add_argument("--ratios", help="comma-separated, percent or fraction")
    b.add_argument("--users", type=int)
    b.add_argument("--size", type=int, help="per-user file size in bytes")
    b.add_argument("--runs", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--parallel", type=int, help="concurrent upload sessions (timings not comparable)")
    b.add_argument("--out", help="CSV output path")
    b.add_argument("--table3", action="store_true", help="include the overhead table")
    b.add_argument("--phases", action="store_true", help="include per-size phase timings")
    return p


def du_main(argv=None) -> int:
    args = _du_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        if args.command == "bench":
            result = _cmd_bench(args)
            print(json.dumps(result, default=str))
            return 0
        conf = config.load(args.config)
        data_dir = Path(args.data_dir) if args.data_dir else conf.du_data_dir
        ident = Identity(data_dir / "identities" / f"{args.identity}.json")
        du = ident.user(conf.protocol)
        runner = _InMemory(data_dir, conf.protocol) if args.in_memory else _Remote(conf)
        result = _run_command(args, du, runner)
        ident.save(du)
    except DedupVaultError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        print(json.dumps({"ok": False, "error": type(exc).__name__, "code": int(exc.code)}))
        return int(exc.code)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(json.dumps({"ok": False, "error": type(exc).__name__}))
        return EXIT_INTERNAL
    print(json.dumps({"ok": True, **result}))
    return 0


def _run_command(args, du: DataUser, runner) -> dict:
    if args.command == "enroll":
        runner.run(du, "start_enroll")
        print(f"enrolled {du.u_id.hex()}", file=sys.stderr)
        return {"u_id": du.u_id.hex()}
    runner.run(du, "start_enroll")
    if args.command == "upload":
        data = Path(args.file).read_bytes()
        res = runner.run(du, "start_upload", data)
        fid = res["file_id"].hex()
        print(f"{args.file}: F_id {fid}{' (deduplicated)' if res['deduplicated'] else ''}", file=sys.stderr)
        return {"file_id": fid, "deduplicated": res["deduplicated"], "h": symcrypto.hash(data).hex()}
    if args.command == "download":
        data = runner.run(du, "start_download", bytes.fromhex(args.file_id))
        out = Path(args.output or args.file_id)
        out.write_bytes(data)
        print(f"wrote {len(data)} bytes to {out}", file=sys.stderr)
        return {"file_id": args.file_id, "bytes": len(data), "h": symcrypto.hash(data).hex(),
                "path": str(out)}
    if args.command == "revoke":
        kind, succ = messages.Successor.NONE, messages.ZERO_ID
        if args.successor == "pricsp":
            kind = messages.Successor.PRICSP
        elif args.successor:
            kind, succ = messages.Successor.USER, bytes.fromhex(args.successor)
        runner.run(du, "start_revoke", bytes.fromhex(args.file_id), kind, succ)
        print(f"revoked {args.file_id}", file=sys.stderr)
        return {"file_id": args.file_id, "revoked": True}
    raise ValueError(f"unknown command {args.command}")


# -- servers -------------------------------------------------------------------


def _server_parser(prog: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=prog)
    p.add_argument("--config")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--data-dir")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


async def _serve_pri(conf: config.Config, host, port, data_dir: Path, ready=None):
    from .transport.tcp import TcpNode

    actor = PriCsp(PrivStore(data_dir), UserDirectory(data_dir), config=conf.protocol,
                   keypair=load_or_create_keypair(data_dir / "u0.key"))
    node = TcpNode(actor)
    bound = await node.listen(host, port)
    log.warning("pricsp listening on %s:%d", host, bound)
    if ready is not None:
        ready(bound)
    try:
        await asyncio.Event().wait()
    finally:
        await node.close()


async def _serve_pub(conf: config.Config, host, port, data_dir: Path, ready=None):
    from .transport.tcp import TcpNode

    actor = PubCsp(PubStore(data_dir), UserDirectory(data_dir), config=conf.protocol)
    node = TcpNode(actor)
    bound = await node.listen(host, port)
    try:
        await _connect_and_wait(node, conf, host, bound, ready)
    finally:
        await node.close()


async def _connect_and_wait(node, conf, host, bound, ready):
    for attempt in range(60):
        try:
            await node.connect("pri", conf.pricsp.host, conf.pricsp.port)
            break
        except OSError:
            await asyncio.sleep(0.5)
    else:
        raise OSError("could not reach pricsp")
    log.warning("pubcsp listening on %s:%d", host, bound)
    if ready is not None:
        ready(bound)
    await asyncio.Event().wait()


def _server_main(prog, section, serve, argv) -> int:
    args = _server_parser(prog).parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    conf = config.load(args.config)
    ep = getattr(conf, section)
    data_dir = Path(args.data_dir) if args.data_dir else ep.data_dir
    try:
        asyncio.run(serve(conf, args.host or ep.host, args.port or ep.port, data_dir))
    except KeyboardInterrupt:
        return 0
    return 0


def pubcsp_main(argv=None) -> int:
    return _server_main("pubcsp-server", "pubcsp", _serve_pub, argv)


def pricsp_main(argv=None) -> int:
    return _server_main("pricsp-server", "pricsp", _serve_pri, argv)


if __name__ == "__main__":
    sys.exit(du_main())
