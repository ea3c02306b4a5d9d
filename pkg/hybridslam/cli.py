#!/usr/bin/env python
import io
import os
import sys

from twisted.logger import (
    FilteringLogObserver, InvalidLogLevelError, LogLevel, LogLevelFilterPredicate, globalLogBeginner,
    textFileLogObserver)
from twisted.python import usage

from .app import ExperimentConfig
from .config import HybridSlamConfig
from .exceptions import InvalidConfig
from .launcher import Launcher


class Options(usage.Options):
    synopsis = 'Usage: hybridslam [options]'

    optParameters = [
        ['config', 'c', None, 'YAML config file layered over the packaged defaults'],
        ['formulation', 'f', None, 'Graph formulation: hybrid or baseline'],
        ['solver', 's', None, 'Solver: batch, incremental or parallel'],
        ['relinearize-skip', None, None, 'Updates between relinearization checks', int],
        ['seed', None, None, 'Scene random seed', int],
        ['out', 'o', None, 'Output directory'],
        ['budget-mb', None, None, 'Bayes tree memory budget in MB', float],
        ['preset', 'p', None, 'Packaged scene preset'],
        ['loglevel', 'l', None, 'Log level: debug, info, warn, error or critical'],
    ]

    optFlags = [
        ['suite', None, 'Run every method on the scene and write the comparison tables'],
    ]

    def postOptions(self):
        if self['config'] and not os.path.isfile(self['config']):
            raise usage.UsageError('No such config file: %s' % self['config'])
        if self['relinearize-skip'] is not None and self['relinearize-skip'] < 1:
            raise usage.UsageError('--relinearize-skip must be >= 1')
        if self['budget-mb'] is not None and self['budget-mb'] <= 0:
            raise usage.UsageError('--budget-mb must be positive')


def build_config(options):
    config = HybridSlamConfig(sources=[options['config']] if options['config'] else ())
    for name in ('formulation', 'solver', 'seed', 'loglevel'):
        if options[name] is not None:
            config.set(name, options[name])
    if options['preset'] is not None:
        config.set('preset', options['preset'])
        config.set('scene_file', None)
        config.update({'scene': None})
    if options['relinearize-skip'] is not None:
        config.set('relinearize_skip', options['relinearize-skip'], section='incremental')
        config.set('relinearize_skips', [options['relinearize-skip']], section='output')
    if options['budget-mb'] is not None:
        config.set('budget_mb', options['budget-mb'], section='incremental')
    if options['out'] is not None:
        config.set('out_dir', options['out'], section='output')
    return config


def start_logging(config):
    try:
        level = LogLevel.levelWithName(config.get('loglevel', 'info').lower())
    except InvalidLogLevelError:
        raise InvalidConfig('Unknown log level: %s' % config.get('loglevel'))
    logfile = config.get('logfile')
    stream = io.open(logfile, 'a') if logfile else sys.stderr
    observer = FilteringLogObserver(textFileLogObserver(stream),
                                    [LogLevelFilterPredicate(defaultLogLevel=level)])
    globalLogBeginner.beginLoggingTo([observer], redirectStandardIO=False)


def main(argv=None):
    options = Options()
    try:
        options.parseOptions(argv)
    except usage.UsageError as e:
        sys.stderr.write('%s\n%s: %s\n' % (options, sys.argv[0], e))
        return 2

    try:
        config = build_config(options)
        start_logging(config)
        experiment = ExperimentConfig.from_config(config)
    except InvalidConfig as e:
        sys.stderr.write('hybridslam: %s\n' % (e,))
        return 2

    launcher = Launcher(experiment)
    if options['suite']:
        _, _, text = launcher.run_suite()
        sys.stdout.write(text)
        return 0
    return launcher.run_experiment()


if __name__ == "__main__":
    sys.exit(main())
