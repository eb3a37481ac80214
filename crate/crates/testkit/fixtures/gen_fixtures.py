#!/usr/bin/env python3
"""Regenerates the binary fixtures in this directory.

Certificates and signature blocks come from the `cryptography` package,
archives from the stdlib `zipfile` module. Neither shares code with the
Rust parsers under test. Output is written next to this script.

    python3 gen_fixtures.py
"""

import base64
import datetime as dt
import hashlib
import io
import os
import zipfile

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.serialization import pkcs7
from cryptography.x509.oid import NameOID

HERE = os.path.dirname(os.path.abspath(__file__))
UTC = dt.timezone.utc
FIXED = dt.datetime(2020, 1, 1, tzinfo=UTC)


def key(seed):
    # deterministic P-256 keys so reruns only differ in signatures
    return ec.derive_private_key(seed, ec.SECP256R1())


def name(cn, org):
    return x509.Name([
        x509.NameAttribute(NameOID.COUNTRY_NAME, "US"),
        x509.NameAttribute(NameOID.ORGANIZATION_NAME, org),
        x509.NameAttribute(NameOID.COMMON_NAME, cn),
    ])


def cert(subject, issuer, subject_key, issuer_key, not_before, not_after, serial):
    return (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(issuer)
        .public_key(subject_key.public_key())
        .serial_number(serial)
        .not_valid_before(not_before)
        .not_valid_after(not_after)
        .sign(issuer_key, hashes.SHA256())
    )


def write(fname, data):
    with open(os.path.join(HERE, fname), "wb") as f:
        f.write(data)


def signature_block(certificate, signing_key, content):
    return (
        pkcs7.PKCS7SignatureBuilder()
        .set_data(content)
        .add_signer(certificate, signing_key, hashes.SHA256())
        .sign(serialization.Encoding.DER,
              [pkcs7.PKCS7Options.DetachedSignature, pkcs7.PKCS7Options.NoAttributes])
    )


def v1_sign(entries, certificate, signing_key, alg="SHA-256"):
    """Returns META-INF members for a JAR-style signature over `entries`."""
    h = hashlib.sha256 if alg == "SHA-256" else hashlib.sha1
    mf = io.StringIO()
    mf.write("Manifest-Version: 1.0\r\nCreated-By: gen_fixtures.py\r\n\r\n")
    sections = []
    for entry_name, data in entries:
        sec = "Name: %s\r\n%s-Digest: %s\r\n\r\n" % (
            entry_name, alg, base64.b64encode(h(data).digest()).decode())
        sections.append((entry_name, sec))
        mf.write(sec)
    manifest = mf.getvalue().encode()
    sf = io.StringIO()
    sf.write("Signature-Version: 1.0\r\n%s-Digest-Manifest: %s\r\n\r\n" % (
        alg, base64.b64encode(h(manifest).digest()).decode()))
    for entry_name, sec in sections:
        sf.write("Name: %s\r\n%s-Digest: %s\r\n\r\n" % (
            entry_name, alg, base64.b64encode(h(sec.encode()).digest()).decode()))
    sf = sf.getvalue().encode()
    return [
        ("META-INF/MANIFEST.MF", manifest),
        ("META-INF/CERT.SF", sf),
        ("META-INF/CERT.EC", signature_block(certificate, signing_key, sf)),
    ]


def main():
    dev_key = key(0x5EED01)
    ca_key = key(0x5EED02)
    leaf_key = key(0x5EED03)

    dev_name = name("Android Debug", "Android")
    valid = cert(dev_name, dev_name, dev_key, dev_key,
                 dt.datetime(2020, 1, 1, tzinfo=UTC), dt.datetime(2050, 1, 1, tzinfo=UTC), 1001)
    expired = cert(dev_name, dev_name, dev_key, dev_key,
                   dt.datetime(2001, 1, 1, tzinfo=UTC), dt.datetime(2002, 1, 1, tzinfo=UTC), 1002)
    ca = name("Fixture CA", "Fixture Org")
    leaf = cert(name("Fixture Publisher", "Fixture Org"), ca, leaf_key, ca_key,
                dt.datetime(2021, 3, 15, 12, 30, 0, tzinfo=UTC),
                dt.datetime(2031, 3, 15, 12, 30, 0, tzinfo=UTC), 1003)

    write("cert_valid.der", valid.public_bytes(serialization.Encoding.DER))
    write("sigblock_valid.der", signature_block(valid, dev_key, b"fixture content\n"))
    write("sigblock_expired.der", signature_block(expired, dev_key, b"fixture content\n"))
    write("sigblock_ca_issued.der", signature_block(leaf, leaf_key, b"fixture content\n"))
    write("certs_only.p7b", pkcs7.serialize_certificates([leaf, valid], serialization.Encoding.DER))

    # two-entry archive from an independent archiver
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as z:
        z.writestr(zipfile.ZipInfo("AndroidManifest.xml", FIXED.timetuple()[:6]),
                   b"\x03\x00\x08\x00" + b"\x00" * 60, compress_type=zipfile.ZIP_DEFLATED)
        z.writestr(zipfile.ZipInfo("classes.dex", FIXED.timetuple()[:6]),
                   b"dex\n035\x00" + b"\x00" * 104, compress_type=zipfile.ZIP_STORED)
    write("tiny.apk", buf.getvalue())

    # v1-signed archive with SHA-1 digests, and the same archive with one byte flipped
    entries = [
        ("res/raw/notes.txt", b"hello from a signed archive\n" * 8),
        ("assets/config.json", b'{"mode":"fixture"}\n'),
    ]
    for fname, mutate in (("jar_signed_sha1.apk", False), ("jar_tampered_sha1.apk", True)):
        members = list(entries)
        meta = v1_sign(members, valid, dev_key, alg="SHA1")
        if mutate:
            data = bytearray(members[0][1])
            data[0] ^= 0x01
            members[0] = (members[0][0], bytes(data))
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w") as z:
            for n, d in members + meta:
                z.writestr(zipfile.ZipInfo(n, FIXED.timetuple()[:6]), d,
                           compress_type=zipfile.ZIP_DEFLATED)
        write(fname, buf.getvalue())


if __name__ == "__main__":
    main()
