from typing import Dict, Hashable, Optional


class QueryCache:
    """Reasoner answers keyed by canonical state, owned by a single trial"""

    def __init__(self):
        self._cache: Dict[Hashable, object] = {}

    def get_answer(self, state_key: Hashable) -> Optional[object]:
        return self._cache.get(state_key)

    def set_answer(self, state_key: Hashable, answer: object) -> None:
        self._cache[state_key] = answer

    def __contains__(self, state_key: Hashable) -> bool:
        return state_key in self._cache

    def __len__(self) -> int:
        return len(self._cache)

    def clear(self) -> None:
        self._cache.clear()
