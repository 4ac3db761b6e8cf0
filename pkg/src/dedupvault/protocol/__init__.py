"""The three actors and the flows that connect them."""

from .common import ProtocolConfig
from .deployment import DELEGATED, OWNER_ONLINE, PRICSP, Deployment, InvariantReport
from .du import DataUser
from .pricsp import PriCsp
from .pubcsp import PubCsp

__all__ = [
    "DELEGATED",
    "OWNER_ONLINE",
    "PRICSP",
    "DataUser",
    "Deployment",
    "InvariantReport",
    "PriCsp",
    "ProtocolConfig",
    "PubCsp",
]
