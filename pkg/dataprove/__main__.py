"""
Run the command line interface with ``python -m dataprove``.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

from .cli import main

if __name__ == "__main__":
    main()
