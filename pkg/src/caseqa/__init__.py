"""caseqa: case-based question answering over a symbolic knowledge base.

Answering works in three stages: retrieve similar solved questions from a
case memory, reuse their query structure to compose a new logical form, and
revise relations that do not execute against the knowledge base.  New
behaviours are added by injecting cases, never by updating parameters.
"""

__version__ = "0.1.0"
