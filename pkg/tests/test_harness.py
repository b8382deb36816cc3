import numpy as np
import pytest

from camadapt import harness as hz


def small_recipe(steps, seed=0, lr=1e-3):
    return hz.TrainRecipe(steps=steps, batch_size=8, lr=lr, seed=seed)


class TestDataset:
    def test_deterministic(self):
        a = hz.generate_synthetic_dataset(3, 5)
        b = hz.generate_synthetic_dataset(3, 5)
        for x, y in zip(a.images, b.images):
            assert np.array_equal(x, y)
        assert np.array_equal(a.labels, b.labels)

    def test_uniform_class_histogram(self):
        ds = hz.generate_synthetic_dataset(0, 7, classes=4)
        counts = np.bincount(ds.labels, minlength=4)
        assert np.all(counts == 7)

    def test_shapes(self):
        ds = hz.generate_synthetic_dataset(0, 2)
        for img in ds.images:
            assert img.shape == (64, 64, 3)
            assert img.dtype == np.uint8

    def test_with_images_preserves_labels(self):
        ds = hz.generate_synthetic_dataset(0, 3)
        flipped = ds.with_images([im[::-1] for im in ds.images], split="test")
        assert np.array_equal(flipped.labels, ds.labels)
        assert flipped.split == "test"

    def test_validation(self):
        with pytest.raises(hz.HarnessError):
            hz.generate_synthetic_dataset(0, 0)
        with pytest.raises(hz.HarnessError):
            hz.generate_synthetic_dataset(0, 1, classes=9)


class TestTraining:
    def test_fine_tune_zero_steps_is_identity(self):
        ds = hz.generate_synthetic_dataset(0, 2)
        model = hz.PerceptionModel(seed=0)
        tuned = hz.fine_tune(model, ds, recipe=small_recipe(0))
        for a, b in zip(model.params, tuned.params):
            assert np.array_equal(a.data, b.data)

    def test_fine_tune_does_not_mutate_original(self):
        ds = hz.generate_synthetic_dataset(0, 4)
        model = hz.PerceptionModel(seed=0)
        before = [p.data.copy() for p in model.params]
        hz.fine_tune(model, ds, recipe=small_recipe(20))
        for b, p in zip(before, model.params):
            assert np.array_equal(b, p.data)

    def test_pretrain_beats_chance(self):
        train = hz.generate_synthetic_dataset(0, 40)
        test = hz.generate_synthetic_dataset(1, 10, split="test")
        model = hz.pretrain(train, recipe=small_recipe(250))
        acc, _ = hz.evaluate(model, test)
        assert acc > 0.25 + 0.3

    @pytest.mark.slow
    def test_pristine_accuracy_reaches_target(self):
        train = hz.generate_synthetic_dataset(0, 150)
        test = hz.generate_synthetic_dataset(1, 50, split="test")
        model = hz.pretrain(train, recipe=hz.TrainRecipe(steps=2000, lr=1e-3,
                                                         seed=0))
        acc, _ = hz.evaluate(model, test)
        assert acc >= 0.95

    def test_deterministic(self):
        ds = hz.generate_synthetic_dataset(0, 4)
        a = hz.pretrain(ds, recipe=small_recipe(15, seed=3), seed=3)
        b = hz.pretrain(ds, recipe=small_recipe(15, seed=3), seed=3)
        for pa, pb in zip(a.params, b.params):
            assert np.array_equal(pa.data, pb.data)


class TestEvaluate:
    def test_per_class_consistent_with_total(self):
        ds = hz.generate_synthetic_dataset(2, 5)
        model = hz.PerceptionModel(seed=1)
        acc, per_class = hz.evaluate(model, ds)
        counts = np.bincount(ds.labels, minlength=model.classes)
        assert abs(acc - np.dot(per_class, counts) / counts.sum()) < 1e-12


class TestScenario:
    def test_validation(self):
        with pytest.raises(hz.HarnessError):
            hz.Scenario("adapted")  # missing checkpoint
        with pytest.raises(hz.HarnessError):
            hz.Scenario("oracle", checkpoint="x")
        with pytest.raises(hz.HarnessError):
            hz.Scenario("mystery")

    def test_zero_distortion_oracle_matches_pristine_finetune(self):
        # with no distortion the oracle IS a pristine re-finetune
        pre = small_recipe(120)
        fin = hz.TrainRecipe(steps=40, batch_size=8, lr=1e-4, seed=0)
        config = hz.StudyConfig(
            distortion=None,
            scenarios=(hz.Scenario("oracle"),),
            seed=0, n_per_class_train=8, n_per_class_test=6,
            pretrain_recipe=pre, finetune_recipe=fin)
        oracle = hz.run_scenarios(config)[0]
        train = hz.generate_synthetic_dataset(0, 8)
        test = hz.generate_synthetic_dataset(1, 6, split="test")
        model = hz.pretrain(train, recipe=pre, seed=0)
        tuned = hz.fine_tune(model, train, recipe=fin, seed=0)
        acc, _ = hz.evaluate(tuned, test)
        assert abs(oracle.accuracy - acc) <= 0.01

    def test_results_csv(self, tmp_path):
        results = [hz.ScenarioResult("baseline", 0, 0.5, np.zeros(4))]
        path = str(tmp_path / "results.csv")
        hz.write_results_csv(path, results, "awgn:20")
        text = open(path).read().splitlines()
        assert text[0] == "scenario,distortion,seed,accuracy"
        assert text[1] == "baseline,awgn:20,0,0.5000"
