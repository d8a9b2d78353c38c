import pytest

from qpattern.circuit import Circuit, cz, measure, rz, sx, x
from qpattern.hardware import preset
from qpattern.lowering import grover_circuit, lower_to_native, star_layout


@pytest.fixture(scope="session")
def marrakesh():
    return preset("marrakesh")


@pytest.fixture(scope="session")
def kingston():
    return preset("kingston")


@pytest.fixture(scope="session")
def grover_1():
    layout, graph = star_layout(7, (6, 8, 17))
    return lower_to_native(grover_circuit("101", 1), layout, graph, backend_id="ibm_kingston",
                           num_physical_qubits=156)


@pytest.fixture
def small_circuit():
    return Circuit("mock", 4, (
        sx(0), rz(0.5, 1), cz(0, 1), x(2), rz(-1.25, 2), cz(1, 2), sx(3),
        measure(0), measure(1), measure(2),
    ))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
