from abc import ABC, abstractmethod
import logging
from pathlib import Path

from src.errors import ConfigError

logger = logging.getLogger(__name__)


class BaseParser(ABC):
    """Base class for all document parsers"""

    encoding = 'utf-8'

    def __init__(self, source=None):
        self.source = source

    def read(self, path):
        """Read a UTF-8 document from disk"""
        path = Path(path)
        try:
            text = path.read_text(encoding=self.encoding)
        except OSError as e:
            raise ConfigError(f"cannot read {path}: {e.strerror or e}") from e
        self.source = str(path)
        logger.debug("read %d bytes from %s", len(text), path)
        return text

    def parse_file(self, path):
        return self.parse(self.read(path))

    @abstractmethod
    def parse(self, text):
        """Parse method to be implemented by subclasses"""
        pass
