"""CSV loading and schema checks for the harness file formats."""

import csv


class SchemaError(ValueError):
    """The CSV does not match the expected harness schema."""


# required columns per figure kind, matching the harness writers
REQUIRED = {
    "importance_box": ("run", "adjustment", "variable",
                       "permutation_importance"),
    "accuracy_panel": ("run", "adjustment", "bias", "variance", "mse"),
    "balance_dots": ("variable", "raw_std_diff", "weighted_std_diff"),
    "pdp_curve": ("variable", "value", "mean_ite"),
}

# columns parsed as floats; everything else stays a string
NUMERIC = {"run", "permutation_importance", "mean_minimal_depth",
           "bias", "variance", "mse", "raw_std_diff", "weighted_std_diff",
           "value", "mean_ite", "estimate"}


class Table:
    """A parsed CSV: column-name tuple plus per-column lists."""

    def __init__(self, header, columns):
        self.header = tuple(header)
        self.columns = columns

    def __len__(self):
        return len(self.columns[self.header[0]]) if self.header else 0

    def column(self, name):
        return self.columns[name]

    def distinct(self, name):
        """Distinct values of a column in first-appearance order."""
        seen = []
        for v in self.columns[name]:
            if v not in seen:
                seen.append(v)
        return seen


def load_table(path, kind):
    """Read ``path`` and verify it carries the columns ``kind`` needs."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row")
        rows = list(reader)
    for name in REQUIRED[kind]:
        if name not in header:
            raise SchemaError(f"{path}: missing required column '{name}'")
    if not rows:
        raise SchemaError(f"{path}: no data rows, need at least one run")
    columns = {name: [] for name in header}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaError(
                f"{path}: line {lineno} has {len(row)} fields, "
                f"expected {len(header)}")
        for name, cell in zip(header, row):
            if name in NUMERIC:
                try:
                    # balance reports leave the cell blank for constant
                    # columns; keep the row and skip the dot later
                    cell = float(cell) if cell != "" else float("nan")
                except ValueError:
                    raise SchemaError(
                        f"{path}: line {lineno}, column '{name}': "
                        f"non-numeric value {cell!r}")
            columns[name].append(cell)
    return Table(header, columns)


def check_highlight(table, highlight, label_column):
    """Every highlighted label must occur in the data."""
    present = set(table.column(label_column))
    for label in highlight:
        if label not in present:
            raise SchemaError(
                f"highlight label '{label}' not found in "
                f"column '{label_column}'")
