"""
barron-flow - Sobolev gradient flow in Barron space
Solves second-order elliptic problems on the unit cube exactly in sparse
trigonometric coefficient space and extracts two-layer networks from the result.

Python: 3.10+
"""

import sys

__version__ = "1.0.0"


def main() -> int:
    """Main entry point for the command-line application."""
    try:
        from .cli.app import BarronFlowApp

        app = BarronFlowApp()
        return app.run(sys.argv[1:])
    except KeyboardInterrupt:
        print("\nInterrupted by user")
        return 0
    except Exception as e:
        print(f"Fatal error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
