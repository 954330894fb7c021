"""
Tests for engine/scheduler.py
"""

import os

import pytest

from engine.scheduler import Scheduler


def square(x):
    return x * x


def worker_pid(_):
    return os.getpid()


class TestScheduler:
    def test_single_worker_runs_inline(self):
        assert Scheduler().map(worker_pid, range(3)) == [os.getpid()] * 3

    def test_pool_keeps_submission_order(self):
        assert Scheduler(workers=3).map(square, range(10)) == [x * x for x in range(10)]

    def test_empty_input(self):
        assert Scheduler(workers=2).map(square, []) == []

    @pytest.mark.asyncio
    async def test_map_async(self):
        results = await Scheduler(workers=2).map_async(square, [3, 1, 2])
        assert results == [9, 1, 4]

    @pytest.mark.asyncio
    async def test_map_async_inline(self):
        assert await Scheduler().map_async(square, [4]) == [16]

    def test_needs_a_worker(self):
        with pytest.raises(ValueError):
            Scheduler(workers=0)
