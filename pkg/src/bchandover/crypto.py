"""Cryptographic primitives behind a small backend interface.

Two interchangeable backends share one interface:

* ``REAL``: Ed25519 signatures plus X25519/HKDF/AES-GCM hybrid encryption.
* ``STUB``: hash-based stand-ins with the same round-trip behaviour, for
  large simulations where real public-key operations dominate runtime.
  Not secure; anyone holding ``P`` can forge stub signatures.

Key generation and encryption accept explicit randomness so simulation runs
are byte-reproducible under a fixed seed.
"""

from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ed25519, x25519
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

DIGEST_SIZE = 32
KEY_ID_SIZE = 8


class DecryptFailure(Exception):
    """Ciphertext cannot be opened with the supplied private key."""


class IntegrityError(DecryptFailure):
    """Ciphertext addressed to this key failed authentication (tampered)."""


def digest(data: bytes) -> bytes:
    """SHA-256 of ``data``; 32 bytes."""
    return hashlib.sha256(data).digest()


def mac(key: bytes, data: bytes) -> bytes:
    return hmac.new(key, data, hashlib.sha256).digest()


def mac_ok(key: bytes, data: bytes, tag: bytes) -> bool:
    return hmac.compare_digest(mac(key, data), tag)


@dataclass(frozen=True)
class KeyPair:
    public: bytes  # P
    private: bytes  # Q

    def __repr__(self) -> str:
        return f"KeyPair(public={self.public[:6].hex()}..)"


def _raw(key) -> bytes:
    return key.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)


@lru_cache(maxsize=4096)
def _ed_priv(seed: bytes) -> ed25519.Ed25519PrivateKey:
    return ed25519.Ed25519PrivateKey.from_private_bytes(seed)


@lru_cache(maxsize=4096)
def _ed_pub(raw: bytes) -> ed25519.Ed25519PublicKey:
    return ed25519.Ed25519PublicKey.from_public_bytes(raw)


@lru_cache(maxsize=4096)
def _x_priv(seed: bytes) -> x25519.X25519PrivateKey:
    return x25519.X25519PrivateKey.from_private_bytes(digest(b"x25519" + seed))


class RealBackend:
    name = "real"
    public_size = 64
    private_size = 32
    signature_size = 64
    overhead = KEY_ID_SIZE + 32 + 12 + 16

    def keypair(self, seed: bytes | None = None) -> KeyPair:
        seed = os.urandom(32) if seed is None else digest(seed)
        return KeyPair(self._public(seed), seed)

    @staticmethod
    @lru_cache(maxsize=4096)
    def _public(seed: bytes) -> bytes:
        return _raw(_ed_priv(seed).public_key()) + _raw(_x_priv(seed).public_key())

    def sign(self, private: bytes, message: bytes) -> bytes:
        return _ed_priv(private).sign(message)

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        if len(public) != self.public_size:
            return False
        try:
            _ed_pub(public[:32]).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True

    def _key(self, shared: bytes, eph: bytes, recipient: bytes) -> bytes:
        return HKDF(hashes.SHA256(), 32, salt=eph + recipient, info=b"bcho-hybrid").derive(shared)

    def encrypt(self, public: bytes, message: bytes, entropy: bytes | None = None) -> bytes:
        entropy = os.urandom(44) if entropy is None else digest(entropy) + digest(entropy + b"n")[:12]
        eph = x25519.X25519PrivateKey.from_private_bytes(entropy[:32])
        eph_pub = _raw(eph.public_key())
        recipient = public[32:]
        key = self._key(eph.exchange(x25519.X25519PublicKey.from_public_bytes(recipient)), eph_pub, recipient)
        key_id = digest(public)[:KEY_ID_SIZE]
        nonce = entropy[32:44]
        return key_id + eph_pub + nonce + AESGCM(key).encrypt(nonce, message, key_id)

    def decrypt(self, private: bytes, ciphertext: bytes) -> bytes:
        public = self._public(private)
        key_id = ciphertext[:KEY_ID_SIZE]
        if len(ciphertext) < self.overhead or key_id != digest(public)[:KEY_ID_SIZE]:
            raise DecryptFailure("ciphertext is not addressed to this key")
        eph_pub = ciphertext[KEY_ID_SIZE:KEY_ID_SIZE + 32]
        nonce = ciphertext[KEY_ID_SIZE + 32:KEY_ID_SIZE + 44]
        shared = _x_priv(private).exchange(x25519.X25519PublicKey.from_public_bytes(eph_pub))
        key = self._key(shared, eph_pub, public[32:])
        try:
            return AESGCM(key).decrypt(nonce, ciphertext[KEY_ID_SIZE + 44:], key_id)
        except InvalidTag as exc:
            raise IntegrityError("ciphertext failed authentication") from exc


class StubBackend:
    name = "stub"
    public_size = 32
    private_size = 32
    signature_size = 32
    overhead = KEY_ID_SIZE + 12 + 16

    def keypair(self, seed: bytes | None = None) -> KeyPair:
        private = os.urandom(32) if seed is None else digest(seed)
        return KeyPair(self._public(private), private)

    @staticmethod
    def _public(private: bytes) -> bytes:
        return digest(b"stub-pub" + private)

    def sign(self, private: bytes, message: bytes) -> bytes:
        return digest(self._public(private) + message)

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        return hmac.compare_digest(digest(public + message), signature)

    @staticmethod
    def _stream(public: bytes, nonce: bytes, n: int) -> bytes:
        return hashlib.shake_256(public + nonce).digest(n)

    def encrypt(self, public: bytes, message: bytes, entropy: bytes | None = None) -> bytes:
        nonce = os.urandom(12) if entropy is None else digest(entropy)[:12]
        body = bytes(a ^ b for a, b in zip(message, self._stream(public, nonce, len(message))))
        tag = digest(public + nonce + body)[:16]
        return digest(public)[:KEY_ID_SIZE] + nonce + body + tag

    def decrypt(self, private: bytes, ciphertext: bytes) -> bytes:
        public = self._public(private)
        if len(ciphertext) < self.overhead or ciphertext[:KEY_ID_SIZE] != digest(public)[:KEY_ID_SIZE]:
            raise DecryptFailure("ciphertext is not addressed to this key")
        nonce = ciphertext[KEY_ID_SIZE:KEY_ID_SIZE + 12]
        body, tag = ciphertext[KEY_ID_SIZE + 12:-16], ciphertext[-16:]
        if not hmac.compare_digest(digest(public + nonce + body)[:16], tag):
            raise IntegrityError("ciphertext failed authentication")
        return bytes(a ^ b for a, b in zip(body, self._stream(public, nonce, len(body))))


REAL = RealBackend()
STUB = StubBackend()
CryptoBackend = RealBackend | StubBackend
BACKENDS = {"real": REAL, "stub": STUB}


def get_backend(name: str) -> CryptoBackend:
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown crypto backend {name!r}") from None


def generate_keypair(seed: bytes | None = None, backend: CryptoBackend = REAL) -> KeyPair:
    return backend.keypair(seed)


def sign(private: bytes, message: bytes, backend: CryptoBackend = REAL) -> bytes:
    return backend.sign(private, message)


def verify(public: bytes, message: bytes, signature: bytes, backend: CryptoBackend = REAL) -> bool:
    return backend.verify(public, message, signature)


def encrypt(public: bytes, message: bytes, entropy: bytes | None = None,
            backend: CryptoBackend = REAL) -> bytes:
    return backend.encrypt(public, message, entropy)


def decrypt(private: bytes, ciphertext: bytes, backend: CryptoBackend = REAL) -> bytes:
    return backend.decrypt(private, ciphertext)
