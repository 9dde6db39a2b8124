"""Entry point for ``python -m optomech``."""

from .cli import main

if __name__ == "__main__":
    main()
