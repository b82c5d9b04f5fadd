# noinspection PyUnresolvedReferences
import quantum_thermal_lens

pytest_plugins = [
    "tests.fixtures",
]
