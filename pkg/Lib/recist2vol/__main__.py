import sys
from recist2vol.cli import main


if __name__ == "__main__":
    sys.exit(main())
