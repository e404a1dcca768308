"""
DRACO - Module Entry Point.

Allows running the CLI as a module:
    python -m draco synth --config synth.yaml
    python -m draco train --config train.yaml
"""

import sys

from draco.cli import main

if __name__ == '__main__':
    sys.exit(main())
