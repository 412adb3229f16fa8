"""Convert the raw UCI ``adult.data`` file into the CSV bundled with dpgc.

The raw file has no header, pads every field with a leading space and ends
with a blank line.  The bundled copy drops ``fnlwgt`` (a census sampling
weight, not a property of the individual) and keeps the other 14 attributes.

The first record is dropped, leaving the 32,560-row reference size.  That is
what reading the headerless file with a header-expecting reader produces.

Usage::

    python scripts/prepare_adult.py /path/to/adult.data src/dpgc/data/adult.csv
"""
import argparse
import csv

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]
DROP = {"fnlwgt"}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("raw")
    parser.add_argument("out")
    parser.add_argument("--keep-first", action="store_true",
                        help="keep the first record (32,561 rows)")
    args = parser.parse_args()

    keep = [i for i, c in enumerate(COLUMNS) if c not in DROP]
    with open(args.raw, newline="") as src, open(args.out, "w", newline="") as dst:
        writer = csv.writer(dst, lineterminator="\n")
        writer.writerow([COLUMNS[i] for i in keep])
        rows = (r for r in csv.reader(src) if r)
        if not args.keep_first:
            next(rows)
        for row in rows:
            row = [cell.strip() for cell in row]
            writer.writerow([row[i] for i in keep])


if __name__ == "__main__":
    main()
