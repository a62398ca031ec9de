"""pytest wiring: configure the Django project the suites are written against."""
import os
import unittest

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "marrprobe.settings")
django.setup()

# unittest.TestCase.enterContext was added in Python 3.11; backport it so the
# suites collect on 3.10 interpreters.
if not hasattr(unittest.TestCase, "enterContext"):
    def _enter_context(self, cm):
        cls = type(cm)
        result = cls.__enter__(cm)
        self.addCleanup(cls.__exit__, cm, None, None, None)
        return result

    unittest.TestCase.enterContext = _enter_context
