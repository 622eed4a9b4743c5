"""Download the NYT state-level cumulative case file and pin a local snapshot.

Keeps the states listed in the policy file and dates up to --end, and writes
``date,state,cases`` rows sorted by state then date. Upstream revisions mean
a fresh download can move the third decimal of published estimates.

    python scripts/fetch_nyt_cases.py                  # -> data/us-states.csv
    python scripts/fetch_nyt_cases.py --source local-copy.csv
"""

import argparse
import csv
import io
import sys
import urllib.request
from pathlib import Path

NYT_URL = "https://raw.githubusercontent.com/nytimes/covid-19-data/master/us-states.csv"
ROOT = Path(__file__).resolve().parent.parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--url", default=NYT_URL)
    ap.add_argument("--source", default=None, help="read an already downloaded file instead")
    ap.add_argument("--policy", default=ROOT / "data" / "policy_dates.csv")
    ap.add_argument("--end", default="2020-06-30", help="last date kept (inclusive)")
    ap.add_argument("-o", "--output", default=ROOT / "data" / "us-states.csv")
    args = ap.parse_args(argv)

    if args.source:
        text = Path(args.source).read_text(encoding="utf-8")
    else:
        with urllib.request.urlopen(args.url, timeout=60) as resp:
            text = resp.read().decode("utf-8")

    with open(args.policy, encoding="utf-8") as fh:
        states = {row["state"] for row in csv.DictReader(fh)}

    rows = [
        (r["state"], r["date"], r["cases"])
        for r in csv.DictReader(io.StringIO(text))
        if r["state"] in states and r["date"] <= args.end
    ]
    rows.sort()
    missing = states - {s for s, _, _ in rows}
    if missing:
        print(f"warning: no rows for {', '.join(sorted(missing))}", file=sys.stderr)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "state", "cases"])
        for state, date, cases in rows:
            w.writerow([date, state, cases])
    print(f"wrote {len(rows)} rows for {len(states) - len(missing)} states to {args.output}")


if __name__ == "__main__":
    main()
