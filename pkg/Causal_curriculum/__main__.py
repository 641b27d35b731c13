import sys

from Causal_curriculum.cli import main

if __name__ == "__main__":
    sys.exit(main())
