import os

TEST_DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
