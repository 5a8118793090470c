"""
Unit tests for the SQLite result cache.
"""

import os
import tempfile
import unittest
from unittest.mock import patch

from oscilla.db import CacheManager, CellRecord, SweepRecord, cache_url

CELL_SUMMARY = {
    'q0': 0.84,
    'q0_energy': 0.84,
    'grad_energy': 1.0,
    'cell_area': 6.28,
    'mesh': {'ny': 32, 'nz': 8, 'h': 0.3},
    'residuals': {'X0': 1e-12},
}


def report_dict(e1_values, statuses=None):
    statuses = statuses or ['ok'] * len(e1_values)
    rows = [{'m': m, 'eps': 1.0 / m, 'status': s, 'dofs': 10 * m, 'e0': 0.1, 'e1': e1,
             'e2': 0.05, 'residual': 1e-11}
            for m, e1, s in zip((4, 8, 16), e1_values, statuses)]
    return {'rows': rows, 'fits': {}, 'q0': 0.84, 'q0_energy': 0.84, 'mesh_limited': {}, 'provenance': {}}


class TestCacheManager(unittest.TestCase):
    """Test cases for CacheManager on an in-memory database."""

    def setUp(self):
        self.cache = CacheManager("sqlite://")

    def test_cell_round_trip(self):
        self.assertIsNone(self.cache.get_cell('abc'))
        self.cache.store_cell('abc', CELL_SUMMARY)
        self.assertEqual(self.cache.get_cell('abc'), CELL_SUMMARY)
        with self.cache.get_session() as session:
            record = session.get(CellRecord, 'abc')
            self.assertEqual(record.ny, 32)
            self.assertEqual(record.q0, 0.84)

    def test_cell_overwrite(self):
        self.cache.store_cell('abc', CELL_SUMMARY)
        self.cache.store_cell('abc', dict(CELL_SUMMARY, q0=0.5))
        self.assertEqual(self.cache.get_cell('abc')['q0'], 0.5)

    def test_corrupt_payload(self):
        self.cache.store_cell('abc', CELL_SUMMARY)
        with self.cache.get_session() as session:
            session.get(CellRecord, 'abc').payload = "{not json"
            session.commit()
        self.assertIsNone(self.cache.get_cell('abc'))

    def test_report_rows(self):
        self.cache.store_report('sweep', report_dict([0.3, float('nan'), 0.1], ['ok', 'failed', 'ok']))
        with self.cache.get_session() as session:
            record = session.get(SweepRecord, 'sweep')
            self.assertEqual([r.m for r in record.rows], [4, 8, 16])
            self.assertIsNone(record.rows[1].e1)
            self.assertEqual(record.rows[1].status, 'failed')
        self.assertEqual(self.cache.get_report('sweep')['q0'], 0.84)

    def test_report_replaces_rows(self):
        self.cache.store_report('sweep', report_dict([0.3, 0.2, 0.1]))
        self.cache.store_report('sweep', report_dict([0.5, 0.4]))
        with self.cache.get_session() as session:
            self.assertEqual(len(session.get(SweepRecord, 'sweep').rows), 2)
        self.assertIsNone(self.cache.get_report('other'))


class TestCacheLocation(unittest.TestCase):
    """Test cases for cache_url and from_environment."""

    def test_disabled_without_directory(self):
        with patch.dict(os.environ, {'OSCILLA_CACHE_DIR': ''}):
            self.assertIsNone(cache_url())
            self.assertIsNone(CacheManager.from_environment())
            with self.assertRaises(ValueError):
                CacheManager()

    def test_file_cache(self):
        with tempfile.TemporaryDirectory() as tmp:
            directory = os.path.join(tmp, 'cache')
            with patch.dict(os.environ, {'OSCILLA_CACHE_DIR': directory}):
                cache = CacheManager.from_environment()
                cache.store_cell('abc', CELL_SUMMARY)
                self.assertTrue(os.path.exists(os.path.join(directory, 'oscilla-cache.db')))
                self.assertEqual(CacheManager.from_environment().get_cell('abc'), CELL_SUMMARY)


if __name__ == '__main__':
    unittest.main()
