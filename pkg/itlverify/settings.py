"""
Django settings for the itlverify project.

The project has no database and no web surface: Django provides settings,
logging configuration, the management commands and the test runner.
"""

from pathlib import Path
import os
import tempfile

from dotenv import load_dotenv
load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('SECRET_KEY', 'itlverify-local-only')

DEBUG = os.getenv('DEBUG', '') == '1'

ALLOWED_HOSTS = []


INSTALLED_APPS = [
    'kernel',
    'problems',
    'hierarchy',
    'coarse',
    'engine',
    'theory',
    'reports',
]

DATABASES = {}

USE_TZ = True
TIME_ZONE = 'UTC'


# Trial execution and verification defaults
ITL_MAX_WORKERS = int(os.getenv('ITL_MAX_WORKERS', '4'))
ITL_SUPINF_MAX_N = int(os.getenv('ITL_SUPINF_MAX_N', '12'))
ITL_REPORT_DIR = os.getenv('ITL_REPORT_DIR', str(BASE_DIR / 'reports_out'))


ITL_LOG = os.getenv('ITL_LOG', 'INFO').upper()
LOG_FILE_PATH = os.getenv('ITL_LOG_FILE', '')

if LOG_FILE_PATH:
    try:
        with open(LOG_FILE_PATH, 'a') as f:
            f.write('')
    except OSError:
        LOG_FILE_PATH = os.path.join(tempfile.gettempdir(), 'itlverify.log')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {asctime} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': ITL_LOG,
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        '': {
            'handlers': ['console'],
            'level': ITL_LOG,
            'propagate': True,
        },
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': False,
        },
    },
}

if LOG_FILE_PATH:
    LOGGING['handlers']['file'] = {
        'level': 'DEBUG',
        'class': 'logging.FileHandler',
        'filename': LOG_FILE_PATH,
        'formatter': 'verbose',
        'mode': 'a',
    }
    LOGGING['loggers']['']['handlers'].append('file')
