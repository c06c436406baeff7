"""
Text Cleaning Service
Normalizes raw article text: links, escape characters, punctuation and digits are removed
"""

import re
import unicodedata
from typing import Iterable, List


class TextCleaner:
    """Service for turning raw multilingual article text into whitespace-tokenizable text"""

    def __init__(self):
        """Initialize cleaning rules"""
        # Links stop at whitespace and at a backslash so literal escape sequences survive for the next rule
        self.url_pattern = re.compile(r'(?:[A-Za-z][A-Za-z0-9+.\-]*://|www\.)[^\s\\]*', re.IGNORECASE)

        # Escape sequences that arrive as two literal characters, e.g. '\n' scraped from JSON dumps
        self.escape_pattern = re.compile(r'\\(?:[nrtfvb0]|u[0-9a-fA-F]{4}|x[0-9a-fA-F]{2})')

        # Unicode categories that become separators
        self.removed_categories = ("P", "S")
        self.removed_exact_categories = {"Nd", "Cc"}

    def remove_links(self, text: str) -> str:
        return self.url_pattern.sub(" ", text)

    def remove_escapes(self, text: str) -> str:
        return self.escape_pattern.sub(" ", text)

    def remove_symbols(self, text: str) -> str:
        """Replace punctuation, symbols, decimal digits and control characters with spaces."""
        return "".join(
            " " if self._is_removed(ch) else ch
            for ch in text
        )

    def _is_removed(self, ch: str) -> bool:
        category = unicodedata.category(ch)
        return category[0] in self.removed_categories or category in self.removed_exact_categories

    def clean(self, raw: str) -> str:
        """
        Apply every rule in order: links, escapes, punctuation/symbols/digits,
        case folding, whitespace collapsing.
        """
        if not raw:
            return ""
        text = self.remove_links(raw)
        text = self.remove_escapes(text)
        text = self.remove_symbols(text)
        text = text.casefold()
        return " ".join(text.split())

    def clean_all(self, texts: Iterable[str]) -> List[str]:
        return [self.clean(text) for text in texts]


_default_cleaner = TextCleaner()


def preprocess_text(raw: str) -> str:
    """Clean one raw text with the default rules."""
    return _default_cleaner.clean(raw)
