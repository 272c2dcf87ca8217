import pytest
from fastapi.testclient import TestClient

from modelserver.app import create_app
from modelserver.config import ServerConfig

TINY = ServerConfig(image_size=96, embed_dim=32,
                    vision_width=48, vision_depth=2, vision_heads=2,
                    text_width=32, text_depth=1, text_heads=2, seed=11)


@pytest.fixture(scope="session")
def server_config():
    return TINY


@pytest.fixture(scope="session")
def client(server_config):
    with TestClient(create_app(server_config)) as c:
        yield c
