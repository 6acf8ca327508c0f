"""Voice-based respiratory screening platform at desk scale.

Two workflows share this package: a training workflow (collection API ->
audio features -> classifier -> model registry) and an inference workflow
(client -> HTTP API -> request queue -> model server -> response queue).
"""

__version__ = "0.1.0"
