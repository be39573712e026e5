"""Reads an exported LP with HiGHS and prints its size. Exit 77 when highspy is missing."""
import sys

try:
    import highspy
except ImportError:
    sys.exit(77)

h = highspy.Highs()
h.setOptionValue("output_flag", False)
if h.readModel(sys.argv[1]) != highspy.HighsStatus.kOk:
    sys.exit("HiGHS could not read " + sys.argv[1])
lp = h.getLp()
print(f"columns {lp.num_col_} rows {lp.num_row_}")
if lp.num_col_ == 0 or lp.num_row_ == 0:
    sys.exit("empty model")
