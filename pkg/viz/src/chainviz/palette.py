"""Fixed 14-entry product-category palette.

Colors follow Paul Tol's colour-blind-safe bright/muted schemes, ordered so
adjacent alluvial categories stay distinguishable; `other` is a neutral grey.
"""

from __future__ import annotations

PALETTE: dict[str, str] = {
    "account": "#4477AA",
    "botnet": "#EE6677",
    "crypter": "#228833",
    "ddos_service": "#CCBB44",
    "hacked_server": "#66CCEE",
    "hack_for_hire": "#AA3377",
    "hosting": "#999933",
    "malware": "#EE8866",
    "proxy": "#44BB99",
    "social_booster": "#FFAABB",
    "spam_tool": "#77AADD",
    "traffic": "#99DDFF",
    "video_game_service": "#DDCC77",
    "other": "#777777",
}


class PaletteError(Exception):
    pass


def color_for(category: str) -> str:
    try:
        return PALETTE[category]
    except KeyError:
        raise PaletteError(
            f"category {category!r} has no palette entry; known: "
            f"{sorted(PALETTE)}") from None
