#!/usr/bin/env python3
"""Validate experiment specs or manifests against schema/experiment.schema.json."""
import argparse
import json
import pathlib
import sys

import jsonschema


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--schema", type=pathlib.Path, required=True)
    parser.add_argument("files", nargs="+", type=pathlib.Path)
    args = parser.parse_args()

    validator = jsonschema.Draft202012Validator(json.loads(args.schema.read_text()))
    failed = 0
    for path in args.files:
        errors = list(validator.iter_errors(json.loads(path.read_text())))
        if errors:
            failed += 1
            best = jsonschema.exceptions.best_match(errors)
            print(f"{path}: {best.json_path}: {best.message}", file=sys.stderr)
        else:
            print(f"{path}: ok")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
