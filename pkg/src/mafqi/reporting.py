"""Output-directory bookkeeping: content-hashed manifests, JSON-lines bound
reports, and the bound summary CSV."""

import csv
import hashlib
import json
import os


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, seed, extra=None):
    """List every file under out_dir with its content hash.

    The manifest itself is excluded from the listing; identical seeds must
    reproduce identical hashes.
    """
    entries = {}
    for root, _, files in os.walk(out_dir):
        for name in sorted(files):
            path = os.path.join(root, name)
            rel = os.path.relpath(path, out_dir)
            if rel == "manifest.json":
                continue
            entries[rel] = sha256_file(path)
    doc = {"seed": seed, "outputs": dict(sorted(entries.items()))}
    if extra:
        doc.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def write_bounds_jsonl(path, reports):
    with open(path, "w") as fh:
        for rep in reports:
            fh.write(rep.to_json())
            fh.write("\n")


def write_bounds_summary_csv(path, rows):
    """One row per bound name: checks run, hold rate, worst margin."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "checked", "hold_rate", "worst_margin",
                         "not_applicable"])
        for row in rows:
            writer.writerow([
                row["name"], row["checked"],
                f"{row['hold_rate']:.17g}", f"{row['worst_margin']:.17g}",
                row["not_applicable"],
            ])
