"""Bundled SPDX license identifiers and common aliases for license validity."""

from __future__ import annotations

SPDX_IDENTIFIERS = {
    "0bsd",
    "afl-3.0",
    "agpl-3.0",
    "agpl-3.0-only",
    "agpl-3.0-or-later",
    "apache-1.1",
    "apache-2.0",
    "artistic-2.0",
    "bsd-2-clause",
    "bsd-3-clause",
    "bsd-3-clause-clear",
    "bsd-4-clause",
    "bsl-1.0",
    "cc-by-4.0",
    "cc-by-sa-4.0",
    "cc0-1.0",
    "cddl-1.0",
    "cecill-2.1",
    "epl-1.0",
    "epl-2.0",
    "eupl-1.2",
    "gpl-2.0",
    "gpl-2.0-only",
    "gpl-2.0-or-later",
    "gpl-3.0",
    "gpl-3.0-only",
    "gpl-3.0-or-later",
    "isc",
    "lgpl-2.1",
    "lgpl-2.1-only",
    "lgpl-2.1-or-later",
    "lgpl-3.0",
    "lgpl-3.0-only",
    "lgpl-3.0-or-later",
    "mit",
    "mit-0",
    "mpl-1.1",
    "mpl-2.0",
    "ms-pl",
    "ms-rl",
    "mulanpsl-2.0",
    "ncsa",
    "odbl-1.0",
    "ofl-1.1",
    "osl-3.0",
    "postgresql",
    "python-2.0",
    "unlicense",
    "upl-1.0",
    "vim",
    "wtfpl",
    "zlib",
    "zpl-2.1",
}

LICENSE_ALIASES = {
    "apache 2.0": "apache-2.0",
    "apache license 2.0": "apache-2.0",
    "apache license, version 2.0": "apache-2.0",
    "apache2": "apache-2.0",
    "bsd": "bsd-3-clause",
    "bsd license": "bsd-3-clause",
    "gplv2": "gpl-2.0",
    "gplv3": "gpl-3.0",
    "lgplv2.1": "lgpl-2.1",
    "lgplv3": "lgpl-3.0",
    "mit license": "mit",
    "mit/x11": "mit",
    "mozilla public license 2.0": "mpl-2.0",
    "public domain": "unlicense",
    "the mit license": "mit",
    "the unlicense": "unlicense",
}


def is_recognized_license(value: str | None) -> bool:
    if not value:
        return False
    folded = value.strip().lower()
    if folded in SPDX_IDENTIFIERS:
        return True
    if folded in LICENSE_ALIASES:
        return True
    # Compound SPDX expressions with recognized components, e.g. "MIT OR Apache-2.0".
    parts = [p.strip("() ") for p in folded.replace(" and ", " or ").split(" or ")]
    return len(parts) > 1 and all(p in SPDX_IDENTIFIERS for p in parts if p)
