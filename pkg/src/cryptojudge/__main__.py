"""Entry point for ``python -m cryptojudge``."""

from .cli import main

raise SystemExit(main())
