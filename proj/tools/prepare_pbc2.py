#!/usr/bin/env python3
"""Convert the public pbc2 export into the subject-format CSV the CLI ingests.

Input: the pbc2 data frame written as CSV, e.g. from R:

    library(joineRML)            # or library(JM)
    data(pbc2)
    write.csv(pbc2, "pbc2_raw.csv", row.names = FALSE)

Output schema: id,time,event_time,event,x1..x3,y1..y12 with one row per
visit, where

    event          death (transplanted and alive are censored)
    x1..x3         treatment indicator, standardized age, sex (female = 1)
    y1..y7         serBilir, serChol, albumin, alkaline, SGOT, platelets,
                   prothrombin (standardized)
    y8..y12        ascites, hepatomegaly, spiders, edema (0 / 0.5 / 1),
                   histologic stage

Visits at or after the event/censoring time are dropped. Missing lab values
are carried forward within a subject; values missing before the first
observation fall back to the column median.
"""

import csv
import statistics
import sys

CONTINUOUS = ["serBilir", "serChol", "albumin", "alkaline", "SGOT",
              "platelets", "prothrombin"]
CATEGORICAL = ["ascites", "hepatomegaly", "spiders", "edema", "histologic"]
LONGITUDINAL = CONTINUOUS + CATEGORICAL


def parse_float(cell):
    cell = cell.strip().strip('"')
    if cell in ("", "NA", "NaN", "."):
        return None
    return float(cell)


def encode(column, cell):
    cell = cell.strip().strip('"')
    if cell in ("", "NA"):
        return None
    low = cell.lower()
    if column == "drug":
        return 1.0 if "peni" in low else 0.0
    if column == "sex":
        return 1.0 if low.startswith("f") else 0.0
    if column in ("ascites", "hepatomegaly", "spiders"):
        if low in ("yes", "1", "true"):
            return 1.0
        if low in ("no", "0", "false"):
            return 0.0
        return None
    if column == "edema":
        if "despite" in low:
            return 1.0
        if "no diuretic" in low or low in ("0.5",):
            return 0.5
        if low.startswith("no") or low in ("0",):
            return 0.0
        return float(cell)
    if column == "histologic":
        return float(cell)
    return parse_float(cell)


def main():
    if len(sys.argv) != 3:
        sys.exit("usage: prepare_pbc2.py pbc2_raw.csv data/pbc2.csv")
    src, dst = sys.argv[1], sys.argv[2]

    with open(src, newline="") as fh:
        reader = csv.DictReader(fh)
        raw = list(reader)
    required = ["id", "years", "status", "drug", "age", "sex", "year"] + \
        LONGITUDINAL
    for col in required:
        if col not in reader.fieldnames:
            sys.exit(f"missing column: {col}")

    rows = []
    for r in raw:
        years = parse_float(r["years"])
        year = parse_float(r["year"])
        if years is None or year is None or year >= years:
            continue
        status = r["status"].strip().strip('"').lower()
        rows.append({
            "id": int(float(r["id"])),
            "time": year,
            "event_time": years,
            "event": 1 if status == "dead" else 0,
            "drug": encode("drug", r["drug"]),
            "age": parse_float(r["age"]),
            "sex": encode("sex", r["sex"]),
            **{c: encode(c, r[c]) for c in LONGITUDINAL},
        })
    rows.sort(key=lambda r: (r["id"], r["time"]))
    print(f"retained {len(rows)} visits of "
          f"{len({r['id'] for r in rows})} subjects")

    # LOCF within subject, then median fallback for leading gaps
    for col in LONGITUDINAL:
        last_id, carried = None, None
        for r in rows:
            if r["id"] != last_id:
                last_id, carried = r["id"], None
            if r[col] is None:
                r[col] = carried
            else:
                carried = r[col]
        observed = [r[col] for r in rows if r[col] is not None]
        med = statistics.median(observed)
        for r in rows:
            if r[col] is None:
                r[col] = med

    for col in ["age"] + CONTINUOUS:
        values = [r[col] for r in rows]
        mean = statistics.fmean(values)
        sd = statistics.pstdev(values) or 1.0
        for r in rows:
            r[col] = (r[col] - mean) / sd

    x_cols = ["drug", "age", "sex"]
    with open(dst, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "time", "event_time", "event"] +
                        [f"x{i + 1}" for i in range(len(x_cols))] +
                        [f"y{i + 1}" for i in range(len(LONGITUDINAL))])
        for r in rows:
            writer.writerow(
                [r["id"], repr(round(r["time"], 10)),
                 repr(round(r["event_time"], 10)), r["event"]] +
                [repr(round(r[c], 10)) for c in x_cols] +
                [repr(round(r[c], 10)) for c in LONGITUDINAL])
    print(f"wrote {dst}")


if __name__ == "__main__":
    main()
