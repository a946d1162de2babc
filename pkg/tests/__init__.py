'''Tests for vi_equilibrium using pytest.

Invoke from the project root directory using `pytest`
'''
