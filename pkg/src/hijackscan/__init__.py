"""Detect registry resources left hijackable by expired contact domains.

Modules follow the pipeline order: ``rpsl`` (snapshot parsing), ``groups``
(maintainer groups), ``whois`` (domain expiry), ``registry`` (change events),
``mrt`` and ``bgp`` (routing activity), ``classifier`` (verdicts) and
``pipeline``/``cli`` (orchestration).
"""

__version__ = "0.1.0"
