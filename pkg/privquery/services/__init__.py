"""
Services package for privquery.

Contains the sampling, learning, privacy-mechanism and query-release
services, plus the experiment harness, verification suite and report
persistence.
"""
