#!/usr/bin/env python3
"""
Contextual String Embeddings
Application entry point
"""

import sys


def main():
    """Main function"""
    from src.cli import run_cli
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
