"""Seeded synthetic data: Gaussian blobs and a templated four-domain patent corpus."""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np

from .corpus import PatentRecord

DOMAIN_VOCAB = {
    "battery chemistry": [
        "lithium", "anode", "cathode", "electrolyte", "separator", "electrode",
        "cell", "charge", "graphite", "cobalt", "nickel", "sodium", "ion", "capacity",
    ],
    "biomedical engineering": [
        "catheter", "implant", "stent", "tissue", "patient", "surgical", "cardiac",
        "vascular", "bone", "scaffold", "suture", "prosthesis", "orthopedic", "clinical",
    ],
    "information technology": [
        "database", "query", "server", "network", "packet", "cache", "processor",
        "software", "compiler", "protocol", "encryption", "bandwidth", "kernel", "router",
    ],
    "mechanical manufacturing": [
        "gear", "bearing", "shaft", "welding", "lathe", "spindle", "casting",
        "torque", "hydraulic", "piston", "milling", "fastener", "valve", "gearbox",
    ],
}

_IPC = {
    "battery chemistry": "H01M10/05",
    "biomedical engineering": "A61F2/82",
    "information technology": "G06F16/33",
    "mechanical manufacturing": "F16H57/02",
}


def gaussian_blobs(n: int, n_blobs: int, dim: int, spread: float = 0.1, seed: int = 0,
                   center_scale: float = 1.0):
    """``n`` float32 points around ``n_blobs`` random centres; returns (points, labels, centres)."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(size=(n_blobs, dim)) * center_scale
    labels = rng.integers(n_blobs, size=n)
    points = centres[labels] + spread * rng.normal(size=(n, dim))
    return points.astype(np.float32), labels, centres


def domain_sentence(domain: str, rng: np.random.Generator, n_words: int = 8) -> str:
    words = rng.choice(DOMAIN_VOCAB[domain], size=n_words)
    return " ".join(words)


def templated_corpus(n_per_domain: int, seed: int = 0, domains=None) -> list[PatentRecord]:
    """Patents whose titles and abstracts draw on one vocabulary per domain."""
    rng = np.random.default_rng(seed)
    domains = list(domains or DOMAIN_VOCAB)
    records = []
    serial = 0
    for domain in domains:
        for _ in range(n_per_domain):
            serial += 1
            filed = date(2006, 1, 1) + timedelta(days=int(rng.integers(0, 6500)))
            records.append(PatentRecord(
                application_number=f"US{serial:07d}",
                title=f"{domain_sentence(domain, rng, 4)} apparatus",
                abstract=f"A {domain_sentence(domain, rng, 10)} system and method.",
                application_date=filed.isoformat(),
                status="granted" if serial % 3 else "pending",
                field_of_invention=domain,
                ipc_codes=(_IPC[domain],),
                inventors=(f"Inventor {serial}",),
            ))
    return records
