from .artifacts import ArtifactService

__all__ = ["ArtifactService"]
