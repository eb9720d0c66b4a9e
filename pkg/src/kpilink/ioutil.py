"""Atomic file writing helpers.

All artifacts are written to a temporary file in the target directory and
renamed into place, so an interrupted run never leaves a truncated file.
"""

import contextlib
import os
import tempfile


@contextlib.contextmanager
def atomic_open(path, mode="w", encoding=None):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    if "b" not in mode and encoding is None:
        encoding = "utf-8"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, mode, encoding=encoding) as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    with atomic_open(path, "w") as handle:
        handle.write(text)


def atomic_write_bytes(path, data):
    with atomic_open(path, "wb") as handle:
        handle.write(data)
