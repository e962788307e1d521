from dotenv import load_dotenv, find_dotenv

load_dotenv(find_dotenv())

import os
data_path = os.environ.get('PROJECT_DATA')

import numpy as np
import pandas as pd

from storage_dr.exceptions import ScenarioError

BUNDLED_PATH = os.path.dirname(os.path.abspath(__file__))


class DataGetter:
    '''
    Stores datapaths and methods to retrieve profiles and scenario files.
    Files are looked up in PROJECT_DATA first (if set) and then in the data
    bundled with the package; absolute or existing paths are used as given.
    '''
    def __init__(self,
                 project_data=None,
                 profiles_dir='profiles',
                 scenarios_dir='scenarios',
                 ):
        '''
        Sets up paths
        '''
        self.project_data = project_data or data_path
        self.profiles_dir = profiles_dir
        self.scenarios_dir = scenarios_dir
        self._profiles = {}

    def _candidates(self, name, subdir):
        if os.path.isabs(name) or os.path.exists(name):
            return [name]
        paths = []
        if self.project_data:
            paths += [os.path.join(self.project_data, subdir, name), os.path.join(self.project_data, name)]
        paths.append(os.path.join(BUNDLED_PATH, subdir, name))
        return paths

    def resolve(self, name, subdir):
        for path in self._candidates(name, subdir):
            if os.path.isfile(path):
                return path
        searched = ', '.join(self._candidates(name, subdir))
        raise ScenarioError(f'data file {name!r} not found (searched {searched})')

    def scenario_path(self, name):
        if not name.endswith('.json') and not os.path.exists(name):
            name = name + '.json'
        return self.resolve(name, self.scenarios_dir)

    def get_profile(self, name, hours=24):
        '''
        Loads an hourly profile

        Args:
            name(str): file name, e.g. 'price_hourly.csv'
            hours(int): expected number of rows

        Returns:
            profile(np.ndarray): values ordered by hour
        '''
        if name in self._profiles:
            return self._profiles[name]

        path = self.resolve(name, self.profiles_dir)
        try:
            df = pd.read_csv(path, comment='#')
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
            raise ScenarioError(f'cannot parse profile {path}: {err}') from err
        if 'value' not in df.columns:
            raise ScenarioError(f'profile {path} has no "value" column', field='value')
        if 'hour' in df.columns:
            df = df.sort_values('hour')
        values = df['value'].to_numpy(dtype=float)
        if len(values) != hours:
            raise ScenarioError(f'profile {path} has {len(values)} rows, expected {hours}')
        if not np.all(np.isfinite(values)):
            raise ScenarioError(f'profile {path} contains non-numeric values')

        self._profiles[name] = values
        return values
