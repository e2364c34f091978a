"""
gettext setup for command-line messages and PDF reports.

Catalogs are looked up in BARRON_FLOW_LOCALE_DIR, the package-local locale/
directory, $PREFIX/share/locale and /usr/share/locale, first match wins.
Without a catalog the messages fall back to English.
"""

import gettext
import os
from pathlib import Path
from typing import Iterator

DOMAIN = "barron-flow"
LOCALE_DIR_ENV = "BARRON_FLOW_LOCALE_DIR"


def _candidate_dirs() -> Iterator[Path]:
    if os.environ.get(LOCALE_DIR_ENV):
        yield Path(os.environ[LOCALE_DIR_ENV])
    yield Path(__file__).resolve().parent.parent / "locale"
    if os.environ.get("PREFIX"):
        yield Path(os.environ["PREFIX"]) / "share" / "locale"
    yield Path("/usr/share/locale")


def locale_dir() -> Path:
    return next((path for path in _candidate_dirs() if gettext.find(DOMAIN, str(path))), Path("/usr/share/locale"))


_translation = gettext.translation(DOMAIN, localedir=str(locale_dir()), fallback=True)
_ = _translation.gettext
ngettext = _translation.ngettext
