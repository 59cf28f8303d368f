"""Entrypoint shim so `python -m sas_pipeline` works."""
import sys

from .main import main

if __name__ == "__main__":
    sys.exit(main())
