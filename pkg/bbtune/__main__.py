"""Entry-point for the :program:`bbtune` umbrella command."""

import sys


def main() -> None:
    """Entrypoint to the ``bbtune`` umbrella command."""
    from bbtune.bin.bbtune import main as _main
    sys.exit(_main())


if __name__ == '__main__':  # pragma: no cover
    main()
