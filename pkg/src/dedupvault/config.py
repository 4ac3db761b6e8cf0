"""Deployment settings from an INI file plus ``DEDUPVAULT_<SECTION>_<KEY>`` overrides.

Example::

    [pubcsp]
    host = 127.0.0.1
    port = 7401
    data_dir = /var/lib/dedupvault/pub

    [pricsp]
    host = 127.0.0.1
    port = 7402
    data_dir = /var/lib/dedupvault/pri

    [possession]
    n = 16
    k = 8
    c = 3

    [timeouts]
    session = 30
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .protocol.common import ProtocolConfig

ENV_PREFIX = "DEDUPVAULT_"

DEFAULTS = {
    "pubcsp": {"host": "127.0.0.1", "port": "7401", "data_dir": "dedupvault-data/pub"},
    "pricsp": {"host": "127.0.0.1", "port": "7402", "data_dir": "dedupvault-data/pri"},
    "du": {"data_dir": "dedupvault-data/du"},
    "possession": {"n": "16", "k": "8", "c": "3"},
    "timeouts": {"session": "30", "retry": "1", "owner": "5", "du_retry": "3", "du_attempts": "40"},
}


@dataclass(frozen=True)
class Endpoint:
    host: str
    port: int
    data_dir: Path


@dataclass(frozen=True)
class Config:
    pubcsp: Endpoint
    pricsp: Endpoint
    du_data_dir: Path
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)


def load(path: str | os.PathLike | None = None, env=None) -> Config:
    env = os.environ if env is None else env
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULTS)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        parts = name[len(ENV_PREFIX):].lower().split("_", 1)
        if len(parts) == 2 and cp.has_section(parts[0]):
            cp.set(parts[0], parts[1], value)

    def endpoint(section: str) -> Endpoint:
        s = cp[section]
        return Endpoint(s["host"], s.getint("port"), Path(s["data_dir"]))

    t, p = cp["timeouts"], cp["possession"]
    proto = ProtocolConfig(
        n_regions=p.getint("n"), k_retained=p.getint("k"), c_challenged=p.getint("c"),
        session_timeout=t.getfloat("session"), retry_interval=t.getfloat("retry"),
        owner_timeout=t.getfloat("owner"), du_retry=t.getfloat("du_retry"),
        du_max_attempts=t.getint("du_attempts"),
    )
    if not 1 <= proto.c_challenged <= proto.k_retained <= proto.n_regions:
        raise ValueError("possession constants must satisfy 1 <= c <= k <= n")
    return Config(endpoint("pubcsp"), endpoint("pricsp"), Path(cp["du"]["data_dir"]), proto)
