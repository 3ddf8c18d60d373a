"""Independent reference implementations the tests check against."""
