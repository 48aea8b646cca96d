#!/usr/bin/env python3
# Copyright 2026 The fairall-cpp Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Derives data/compas.csv from ProPublica's compas-scores-two-years.csv.

Row filters follow the usual AIF360 COMPAS preprocessing (screening within
30 days of arrest, known recidivism, non-ordinary charge, valid score text,
African-American or Caucasian defendants), which leaves 5278 rows.

Usage: prepare_compas.py RAW_CSV OUT_CSV
"""

import csv
import sys

KEEP_RACES = ("African-American", "Caucasian")


def main(raw_path, out_path):
    rows = []
    with open(raw_path, newline="") as f:
        for r in csv.DictReader(f):
            if r["days_b_screening_arrest"] == "":
                continue
            if not -30 <= int(r["days_b_screening_arrest"]) <= 30:
                continue
            if r["is_recid"] == "-1" or r["c_charge_degree"] == "O":
                continue
            if r["score_text"] == "N/A" or r["race"] not in KEEP_RACES:
                continue
            rows.append({
                "priors_count": r["priors_count"],
                "c_charge_degree": r["c_charge_degree"],
                "age_cat": r["age_cat"],
                "race": r["race"],
                "no_recid": "1" if r["two_year_recid"] == "0" else "0",
            })
    with open(out_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {out_path}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
