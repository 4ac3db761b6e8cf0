import json
import subprocess
import sys

import pytest

from dedupvault import cli
from dedupvault.errors import ErrorCode


def run(capsys, *argv):
    rc = cli.du_main(list(argv))
    out = capsys.readouterr()
    return rc, json.loads(out.out.strip().splitlines()[-1]), out.err


@pytest.fixture
def blob(tmp_path):
    p = tmp_path / "f.bin"
    p.write_bytes(bytes(range(256)) * 80)
    return p


def test_in_memory_flows(tmp_path, blob, capsys):
    base = ["--in-memory", "--data-dir", str(tmp_path / "dv")]
    rc, res, _ = run(capsys, *base, "--identity", "alice", "enroll")
    assert rc == 0 and res["ok"]
    rc, up1, _ = run(capsys, *base, "--identity", "alice", "upload", str(blob))
    assert rc == 0 and up1["deduplicated"] is False
    rc, up2, err = run(capsys, *base, "--identity", "bob", "upload", str(blob))
    assert rc == 0 and up2["deduplicated"] is True and up2["file_id"] == up1["file_id"]
    assert "deduplicated" in err
    out = tmp_path / "back.bin"
    rc, down, _ = run(capsys, *base, "--identity", "bob", "download", up1["file_id"], "-o", str(out))
    assert rc == 0 and out.read_bytes() == blob.read_bytes()
    rc, _, _ = run(capsys, *base, "--identity", "bob", "revoke", up1["file_id"])
    assert rc == 0
    rc, res, _ = run(capsys, *base, "--identity", "bob", "download", up1["file_id"], "-o", str(out))
    assert rc == ErrorCode.ACCESS_DENIED and res["error"] == "AccessDenied"
    rc, _, _ = run(capsys, *base, "--identity", "alice", "download", up1["file_id"], "-o", str(out))
    assert rc == 0 and out.read_bytes() == blob.read_bytes()
    ident = tmp_path / "dv" / "identities" / "alice.json"
    assert ident.stat().st_mode & 0o777 == 0o600


def test_revoke_with_successor(tmp_path, blob, capsys):
    base = ["--in-memory", "--data-dir", str(tmp_path / "dv")]
    _, up, _ = run(capsys, *base, "--identity", "a", "upload", str(blob))
    _, b, _ = run(capsys, *base, "--identity", "b", "enroll")
    run(capsys, *base, "--identity", "b", "upload", str(blob))
    rc, _, _ = run(capsys, *base, "--identity", "a", "revoke", up["file_id"], "--successor", b["u_id"])
    assert rc == 0
    rc, _, _ = run(capsys, *base, "--identity", "b", "revoke", up["file_id"], "--successor", "pricsp")
    assert rc == 0


def test_errors_map_to_exit_codes(tmp_path, capsys):
    base = ["--in-memory", "--data-dir", str(tmp_path / "dv")]
    small = tmp_path / "small.bin"
    small.write_bytes(b"x" * 10)
    rc, res, _ = run(capsys, *base, "upload", str(small))
    assert rc == ErrorCode.FILE_TOO_SMALL and not res["ok"]
    rc, _, _ = run(capsys, *base, "upload", str(tmp_path / "missing"))
    assert rc == cli.EXIT_INTERNAL


def test_bench_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    rc, res, err = run(capsys, "bench", "--ratios", "0,20,40,60,80,100", "--users", "5",
                       "--size", "12000", "--runs", "1", "--out", str(out))
    assert rc == 0
    assert len(out.read_text().strip().splitlines()) == 7
    assert [r["blobs"] for r in res["sweep"]] == [5, 5, 4, 3, 2, 1]
    assert "0.373" in err


def test_bench_config_file(tmp_path, capsys):
    ini = tmp_path / "bench.ini"
    ini.write_text("[bench]\nratios = 0, 1\nusers = 3\nfile_size = 12000\nruns = 1\n")
    rc, res, _ = run(capsys, "bench", str(ini), "--table3")
    assert rc == 0 and [r["blobs"] for r in res["sweep"]] == [3, 1]
    assert any(r["scheme"] == "Our scheme" for r in res["table3"])


def test_console_scripts_installed():
    out = subprocess.run([sys.executable, "-m", "dedupvault.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "upload" in out.stdout


def test_servers_over_tcp(tmp_path, blob, capsys):
    import asyncio
    import socket
    import threading

    from dedupvault import config

    def free_port():
        with socket.socket() as s:
            s.bind(("127.0.0.1", 0))
            return s.getsockname()[1]

    pub_port, pri_port = free_port(), free_port()
    ini = tmp_path / "dv.ini"
    ini.write_text(f"[pubcsp]\nport = {pub_port}\ndata_dir = {tmp_path / 'pub'}\n"
                   f"[pricsp]\nport = {pri_port}\ndata_dir = {tmp_path / 'pri'}\n"
                   f"[du]\ndata_dir = {tmp_path / 'du'}\n")
    conf = config.load(ini, env={})
    ready = threading.Event()
    loop = asyncio.new_event_loop()

    async def both():
        pri = asyncio.ensure_future(cli._serve_pri(conf, "127.0.0.1", pri_port, tmp_path / "pri"))
        await asyncio.sleep(0.1)
        pub = asyncio.ensure_future(cli._serve_pub(conf, "127.0.0.1", pub_port, tmp_path / "pub",
                                                   ready=lambda _: ready.set()))
        try:
            await asyncio.gather(pri, pub)
        except asyncio.CancelledError:
            pass

    main = loop.create_task(both())
    t = threading.Thread(target=lambda: loop.run_until_complete(main), daemon=True)
    t.start()
    try:
        assert ready.wait(10)
        rc, up1, _ = run(capsys, "--config", str(ini), "--identity", "a", "upload", str(blob))
        assert rc == 0 and not up1["deduplicated"]
        rc, up2, _ = run(capsys, "--config", str(ini), "--identity", "b", "upload", str(blob))
        assert rc == 0 and up2["deduplicated"]
        out = tmp_path / "o.bin"
        rc, _, _ = run(capsys, "--config", str(ini), "--identity", "b", "download", up1["file_id"],
                       "-o", str(out))
        assert rc == 0 and out.read_bytes() == blob.read_bytes()
    finally:
        loop.call_soon_threadsafe(main.cancel)
        t.join(5)
