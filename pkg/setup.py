#!/usr/bin/env python3
"""Setup script for ocl-bench: stamps a timestamp version at install time."""

from datetime import datetime
from pathlib import Path

from setuptools import setup
from setuptools.command.develop import develop
from setuptools.command.install import install

VERSION_FILE = Path("src") / "ocl_bench" / ".version"


def timestamp_version(now=None):
    """PEP 440 version ``YYYY.M.D.HHMM`` (read back by ``ocl-bench version``)."""
    now = now or datetime.now()
    return f"{now.year}.{now.month}.{now.day}.{now.hour:02d}{now.minute:02d}"


def stamp_version():
    version = timestamp_version()
    VERSION_FILE.parent.mkdir(parents=True, exist_ok=True)
    VERSION_FILE.write_text(version, encoding="utf-8")
    print(f"ocl-bench {version} stamped into {VERSION_FILE}")
    return version


def _stamping(command):
    class Stamped(command):
        def run(self):
            stamp_version()
            super().run()

    Stamped.__name__ = f"Stamped{command.__name__.capitalize()}"
    return Stamped


def current_version():
    try:
        return VERSION_FILE.read_text(encoding="utf-8").strip() or timestamp_version()
    except OSError:
        return timestamp_version()


if __name__ == "__main__":
    setup(
        version=current_version(),
        cmdclass={"install": _stamping(install), "develop": _stamping(develop)},
    )
