"""Module allowing for `python -m maskdb ...`."""


import sys

try:
    from maskdb.cli.app import app
except ImportError:
    print(
        "maskdb must be installed with its cli extra to run this script."
        "please install maskdb[cli] and try again."
    )
    sys.exit(1)

if __name__ == "__main__":
    sys.exit(app())
