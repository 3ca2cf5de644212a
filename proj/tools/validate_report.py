#!/usr/bin/env python3
"""Run synth + compare with the CLI and validate compare_report.json against its schema."""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def main():
    tool, schema_path = sys.argv[1], sys.argv[2]
    with tempfile.TemporaryDirectory() as tmp:
        data, out = Path(tmp, "data"), Path(tmp, "out")
        subprocess.run([tool, "synth", "--k", "6", "--frames", "800", "--swap-rate", "0.05",
                        "--seed", "3", "--out", str(data)], check=True)
        subprocess.run([tool, "compare", "--input", str(data / "tracking.csv"), "--k-max", "5",
                        "--pca-components", "4", "--overlap-samples", "5000", "--out", str(out)],
                       check=True)
        report = json.loads((out / "compare_report.json").read_text())
    schema = json.loads(Path(schema_path).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    jsonschema.validate(report, schema, cls=jsonschema.Draft202012Validator)
    print("compare_report.json matches", schema_path)


if __name__ == "__main__":
    main()
