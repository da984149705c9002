"""Validate exports written by the CLI against the published JSON Schema."""

import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema


def run(cli, *args):
    proc = subprocess.run([cli, *args], capture_output=True, text=True)
    if proc.returncode != 0:
        sys.exit(f"{' '.join(args[:1])} failed ({proc.returncode}):\n{proc.stdout}{proc.stderr}")


def main():
    cli, schema_path, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)
    schema = json.loads(schema_path.read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)

    data = work / "data"
    run(cli, "gen-synth", "--width", "24", "--height", "24", "--out", str(data))
    regions = work / "classes.json"
    run(cli, "regions-from-labels", "--data", str(data), "--out", str(regions))

    failures = 0
    for d in (1, 2, 3):
        ckpt = work / f"pca{d}.ckpt"
        out = work / f"pca{d}.json"
        run(cli, "train", "--data", str(data), "--out", str(ckpt), "--model", "joint-pca", "--latent-dim", str(d))
        run(cli, "export-viz", "--data", str(data), "--checkpoint", str(ckpt), "--out", str(out),
            "--regions", str(regions), "--bins", "32")
        doc = json.loads(out.read_text())
        errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
        for e in errors:
            print(f"d_z {d}: {'/'.join(map(str, e.path))}: {e.message}")
        failures += len(errors)
        if (doc["heatmap"] is None) != (d != 2):
            print(f"d_z {d}: heatmap presence is wrong")
            failures += 1

    bad = json.loads((work / "pca2.json").read_text())
    bad["spatial"]["records"][0]["color"] = [2.0, 0.0, 0.0]
    if validator.is_valid(bad):
        print("schema accepted an out-of-range color")
        failures += 1

    print("schema check:", "ok" if failures == 0 else f"{failures} problem(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
