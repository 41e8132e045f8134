import os
from dotenv import load_dotenv

load_dotenv()

class Config:
    # Data Configuration
    DATA_DIR = os.getenv('HD_DATA_DIR', './data')
    MODEL_DIR = os.getenv('HD_MODEL_DIR', './models')

    # Hypervector Configuration
    DIM = int(os.getenv('HD_DIM', 10000))
    LEVELS = int(os.getenv('HD_LEVELS', 64))  # Q quantization levels

    # Training Configuration
    ALPHA = float(os.getenv('HD_ALPHA', 1.0))
    BETA = float(os.getenv('HD_BETA', 0.5))  # cutoff b = BETA * sigma_row, keep below 1
    MAX_EPOCHS = int(os.getenv('HD_MAX_EPOCHS', 30))
    PATIENCE = int(os.getenv('HD_PATIENCE', 5))
    BINARIZER = os.getenv('HD_BINARIZER', 'stochastic')
    SEED = int(os.getenv('HD_SEED', 0))
    VALIDATION_FRACTION = float(os.getenv('HD_VALIDATION_FRACTION', 0.1))
    SHUFFLE = os.getenv('HD_SHUFFLE', 'true').lower() == 'true'

    # Execution Configuration
    BATCH_SIZE = int(os.getenv('HD_BATCH_SIZE', 512))  # points per encode/predict chunk
    LATENCY_QUERIES = int(os.getenv('HD_LATENCY_QUERIES', 1000))
    LOG_LEVEL = os.getenv('HD_LOG_LEVEL', 'INFO')
