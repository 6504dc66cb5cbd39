import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from exactk.core.errors import ConfigurationError, DataError
from exactk.core.manifest import MANIFEST_NAME, RunManifest
from exactk.data.samples import Sample, read_samples
from exactk.data.world import OracleWorld
from exactk.graph.constraint import Constraint, GraphBuilder
from exactk.model.features import FeatureTable


TRAIN_FILE = "train.tsv"
TEST_FILE = "test.tsv"
WORLD_FILE = "world.exka"
DATA_COMMAND = "gen-data"


def constraint_from(config: Dict[str, Any]) -> Constraint:
    if config.get("constraint", "none") == "min_ned":
        if config.get("tau") is None:
            raise ConfigurationError("min_ned constraint needs --tau")
        return Constraint.min_ned(float(config["tau"]))
    return Constraint.none()


@dataclass
class Dataset:
    """A generated dataset directory: splits, its generation config and, in oracle mode, the world."""

    directory: str
    config: Dict[str, Any]
    train: List[Sample]
    test: List[Sample]
    world: Optional[OracleWorld] = None

    @property
    def mode(self) -> str:
        return self.config["mode"]

    @property
    def k(self) -> int:
        return int(self.config["k"])

    @property
    def n(self) -> int:
        return int(self.config["n"])

    def split_named(self, name: str) -> List[Sample]:
        return self.test if name == "test" else self.train

    def graph_builder(self) -> GraphBuilder:
        titles = self.world.title_map() if self.world is not None else None
        return GraphBuilder(constraint_from(self.config), titles)

    def dense_features(self) -> Optional[FeatureTable]:
        if self.world is None:
            return None
        return FeatureTable.dense(self.world.user_vectors, self.world.item_vectors)

    def features(self, dim: int, rng: np.random.Generator) -> FeatureTable:
        """World vectors for oracle data, fresh id embeddings otherwise. Each model gets its own table."""
        dense = self.dense_features()
        if dense is not None:
            return dense
        return FeatureTable.embeddings(int(self.config["n_users"]), int(self.config["n_items"]), dim, rng)

    @property
    def inputs(self) -> Dict[str, str]:
        paths = {"train": os.path.join(self.directory, TRAIN_FILE), "test": os.path.join(self.directory, TEST_FILE)}
        if self.world is not None:
            paths["world"] = os.path.join(self.directory, WORLD_FILE)
        return paths


def load_dataset(directory: str) -> Dataset:
    manifest = RunManifest.read(os.path.join(directory, MANIFEST_NAME))
    if manifest.command != DATA_COMMAND:
        raise DataError(f"{directory} was written by {manifest.command!r}, not {DATA_COMMAND}")
    config = manifest.config
    train = read_samples(os.path.join(directory, TRAIN_FILE))
    test = read_samples(os.path.join(directory, TEST_FILE))
    for sample in train + test:
        sample.validate(int(config["k"]), int(config["n"]))
    world = None
    if config.get("mode") == "oracle":
        world = OracleWorld.load(os.path.join(directory, WORLD_FILE))
    return Dataset(directory, config, train, test, world)
