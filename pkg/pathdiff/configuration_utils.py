# coding=utf-8
"""Base class for the JSON-backed configuration objects."""
from __future__ import absolute_import, division, print_function

import copy
import json
import logging
import sys
from io import open

from .errors import ConfigError

logger = logging.getLogger(__name__)


class JsonConfig(object):
    """Configuration stored as plain attributes and serialized to JSON.

    Subclasses list their keys and default values in ``defaults`` and may
    override ``validate``. A config is built either from the path of a JSON
    file or from keyword values.
    """
    defaults = {}

    def __init__(self, config_json_file=None, **kwargs):
        values = copy.deepcopy(self.defaults)
        if config_json_file is not None:
            if not (isinstance(config_json_file, str) or (sys.version_info[0] == 2
                                                          and isinstance(config_json_file, unicode))):  # noqa: F821
                raise ValueError("First argument must be the path to a json config file (str)")
            with open(config_json_file, "r", encoding='utf-8') as reader:
                values.update(self._checked(json.loads(reader.read())))
        values.update(self._checked(kwargs))
        for key, value in values.items():
            self.__dict__[key] = value
        self.validate()

    @classmethod
    def _checked(cls, json_object):
        unknown = sorted(set(json_object) - set(cls.defaults))
        if unknown:
            raise ConfigError("Unknown keys for {}: {}".format(cls.__name__, ", ".join(unknown)))
        return json_object

    def validate(self):
        pass

    @classmethod
    def from_dict(cls, json_object):
        """Constructs a config from a Python dictionary of parameters."""
        return cls(**json_object)

    @classmethod
    def from_json_file(cls, json_file):
        """Constructs a config from a json file of parameters."""
        with open(json_file, "r", encoding='utf-8') as reader:
            text = reader.read()
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return str(self.to_json_string())

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self == other

    def to_dict(self):
        """Serializes this instance to a Python dictionary."""
        return copy.deepcopy(self.__dict__)

    def to_json_string(self):
        """Serializes this instance to a JSON string."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_json_file(self, json_file_path):
        """ Save this instance to a json file."""
        with open(json_file_path, "w", encoding='utf-8') as writer:
            writer.write(self.to_json_string())
