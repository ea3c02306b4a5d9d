from pkgutil import get_data

import yaml

from .exceptions import InvalidConfig

_TRUE = ('1', 'yes', 'true', 'on')
_FALSE = ('0', 'no', 'false', 'off', '')


def _merge(base, other):
    for name, value in (other or {}).items():
        if isinstance(value, dict) and isinstance(base.get(name), dict):
            _merge(base[name], value)
        else:
            base[name] = value
    return base


class HybridSlamConfig(object):
    """
    Self-contained sectioned settings backed by YAML, with no base class from another package.
    Layers, later wins: packaged defaults, every file in ``sources``, then ``values``.
    Lookups without a section go to ``SECTION``; typed getters raise ``InvalidConfig``.
    """
    SECTION = 'hybridslam'

    def __init__(self, values=None, sources=()):
        self._data = {}
        default = self.get_default_config()
        if default:
            self.update(yaml.safe_load(default))
        for path in sources:
            self.load(path)
        if values:
            self.update(values)

    def get_default_config(self):
        try:
            return get_data(__package__, 'default_{section}.yaml'.format(section=self.SECTION))
        except IOError:
            pass

    def load(self, path):
        try:
            with open(path) as f:
                data = yaml.safe_load(f)
        except (IOError, OSError) as e:
            raise InvalidConfig("Can't read config file %s: %s" % (path, e))
        except yaml.YAMLError as e:
            raise InvalidConfig('Malformed config file %s: %s' % (path, e))
        self.update(data)
        return self

    def update(self, data):
        if data is None:
            return
        if not isinstance(data, dict):
            raise InvalidConfig('Config must be a mapping of sections, got %r' % type(data).__name__)
        _merge(self._data, data)

    def set(self, name, value, section=None):
        self._data.setdefault(section or self.SECTION, {})[name] = value

    def sections(self):
        return sorted(self._data)

    def items(self, section=None, default=None):
        data = self._data.get(section or self.SECTION)
        if data is None:
            return default if default is not None else {}
        return dict(data)

    def get(self, name, default=None, section=None):
        value = self._data.get(section or self.SECTION, {}).get(name)
        return default if value is None else value

    def _convert(self, name, default, section, kind):
        value = self.get(name, default, section)
        if value is None:
            return None
        try:
            return kind(value)
        except (TypeError, ValueError):
            raise InvalidConfig('%s.%s: expected %s, got %r' % (section or self.SECTION, name, kind.__name__, value))

    def getint(self, name, default=None, section=None):
        return self._convert(name, default, section, int)

    def getfloat(self, name, default=None, section=None):
        return self._convert(name, default, section, float)

    def getboolean(self, name, default=False, section=None):
        value = self.get(name, default, section)
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise InvalidConfig('%s.%s: expected a boolean, got %r' % (section or self.SECTION, name, value))

    def getlist(self, name, default=None, section=None):
        value = self.get(name, default, section)
        if value is None:
            return []
        if isinstance(value, str):
            return [v.strip() for v in value.split(',') if v.strip()]
        return list(value)

    def getdict(self, name, default=None, section=None):
        value = self.get(name, default, section)
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise InvalidConfig('%s.%s: expected a mapping, got %r' % (section or self.SECTION, name, value))
        return dict(value)
