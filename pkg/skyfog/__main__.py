"""Main entry point for Skyfog when run as a module."""

from skyfog.cli import main_wrapper

if __name__ == "__main__":
    main_wrapper()
