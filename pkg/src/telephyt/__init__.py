"""Tele-rehabilitation skeleton streaming and exercise analysis toolkit."""

__version__ = "0.1.0"
