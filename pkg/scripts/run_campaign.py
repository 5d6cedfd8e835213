"""Leave-one-out campaign from a config file (same as ``dscsrgm campaign --config``).

    python scripts/run_campaign.py configs/campaign.toml
"""
import sys

from dscsrgm.cli import main

if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    sys.exit(main(["campaign", "--config", sys.argv[1]]))
