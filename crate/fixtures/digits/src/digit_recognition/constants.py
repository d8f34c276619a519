import os

PACKAGE_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_DIR = os.path.dirname(os.path.dirname(PACKAGE_DIR))

MODEL_DIGIT_RECOGNITION_PATH = os.path.join(PROJECT_DIR, "models", "digit_recognition.json")

IMAGE_SIDE = 28
TEST_SET_SIZE = 250
