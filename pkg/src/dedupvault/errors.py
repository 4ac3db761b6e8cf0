"""Exception hierarchy and wire error codes."""

from __future__ import annotations

import enum


class ErrorCode(enum.IntEnum):
    SIGNATURE_INVALID = 1
    UNKNOWN_USER = 2
    ALREADY_HOLDER = 3
    POSSESSION_FAILED = 4
    ACCESS_DENIED = 5
    NOT_A_HOLDER = 6
    NOT_OWNER = 7
    SUCCESSOR_NOT_HOLDER = 8
    UNKNOWN_FILE = 9
    BUSY = 10
    NONCE_MISMATCH = 11
    SESSION_EXPIRED = 12
    BAD_REQUEST = 13
    CONSISTENCY_FAILURE = 14
    ENROLLMENT_CONFLICT = 15
    DECLINED = 16
    DUPLICATE_DETECTED = 17
    NOT_DUPLICATE = 18
    TIMEOUT = 19
    FILE_TOO_SMALL = 20
    AUTH_FAILURE = 21
    DUPLICATE_FILE_ID = 22


class DedupVaultError(Exception):
    code: ErrorCode = ErrorCode.BAD_REQUEST


def _err(name: str, code: ErrorCode, *bases):
    cls = type(name, bases or (DedupVaultError,), {"code": code})
    _BY_CODE.setdefault(code, cls)
    return cls


_BY_CODE: dict[ErrorCode, type] = {}

SignatureInvalid = _err("SignatureInvalid", ErrorCode.SIGNATURE_INVALID)
UnknownUser = _err("UnknownUser", ErrorCode.UNKNOWN_USER)
AlreadyHolder = _err("AlreadyHolder", ErrorCode.ALREADY_HOLDER)
PossessionFailed = _err("PossessionFailed", ErrorCode.POSSESSION_FAILED)
AccessDenied = _err("AccessDenied", ErrorCode.ACCESS_DENIED)
NotAHolder = _err("NotAHolder", ErrorCode.NOT_A_HOLDER)
NotOwner = _err("NotOwner", ErrorCode.NOT_OWNER)
SuccessorNotHolder = _err("SuccessorNotHolder", ErrorCode.SUCCESSOR_NOT_HOLDER)
UnknownFile = _err("UnknownFile", ErrorCode.UNKNOWN_FILE, DedupVaultError, KeyError)
Busy = _err("Busy", ErrorCode.BUSY)
NonceMismatch = _err("NonceMismatch", ErrorCode.NONCE_MISMATCH)
SessionExpired = _err("SessionExpired", ErrorCode.SESSION_EXPIRED)
BadRequest = _err("BadRequest", ErrorCode.BAD_REQUEST)
ConsistencyFailure = _err("ConsistencyFailure", ErrorCode.CONSISTENCY_FAILURE)
EnrollmentConflict = _err("EnrollmentConflict", ErrorCode.ENROLLMENT_CONFLICT)
Declined = _err("Declined", ErrorCode.DECLINED)
DuplicateDetected = _err("DuplicateDetected", ErrorCode.DUPLICATE_DETECTED)
NotDuplicate = _err("NotDuplicate", ErrorCode.NOT_DUPLICATE)
FlowTimeout = _err("FlowTimeout", ErrorCode.TIMEOUT)
FileTooSmall = _err("FileTooSmall", ErrorCode.FILE_TOO_SMALL)
AuthFailure = _err("AuthFailure", ErrorCode.AUTH_FAILURE)
DuplicateFileId = _err("DuplicateFileId", ErrorCode.DUPLICATE_FILE_ID)


def error_for(code: int, detail: str = "") -> DedupVaultError:
    try:
        code = ErrorCode(code)
    except ValueError:
        return DedupVaultError(f"unknown error code {code}")
    return _BY_CODE.get(code, DedupVaultError)(detail or code.name.lower())
