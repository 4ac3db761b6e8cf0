"""Encrypted deduplication across a public storage cloud and a private key cloud.

Three actors take part: data users (DU), the public storage provider
(Pub-CSP) that keeps one ciphertext per distinct file, and the private
provider (Pri-CSP) that issues keys by proxy re-encryption and checks proof
of possession before admitting a new holder.
"""

__version__ = "0.1.0"
