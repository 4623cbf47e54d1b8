"""LIBSVM parsing, dataset invariants, serialization round-trips."""

import numpy as np
import pytest
import scipy.sparse as sp

from strata_sgd import Dataset, ParseError, align, dump_libsvm, parse_libsvm


class TestParsing:
    def test_basic_shape_and_values(self, tiny_dataset):
        ds = tiny_dataset
        assert (ds.n, ds.d, ds.m) == (5, 3, 2)
        dense = ds.dense()
        assert dense[0].tolist() == [1.0, 0.0, 0.5]
        assert dense[2].tolist() == [0.0, 1.0, 0.0]
        assert ds.y.tolist() == [0, 0, 1, 1, 0]
        assert ds.label_map == {1: 0, 2: 1}

    def test_one_based_indices_become_zero_based(self):
        ds = parse_libsvm("3 1:7.0\n")
        assert ds.dense()[0, 0] == 7.0
        assert ds.label_map == {3: 0}

    def test_comments_and_blank_lines_skipped(self):
        text = "# header\n\n1 1:1.0  # trailing comment\n\n2 1:2.0\n# done\n"
        ds = parse_libsvm(text)
        assert ds.n == 2
        assert ds.dense()[:, 0].tolist() == [1.0, 2.0]

    def test_label_only_line_is_an_all_zero_row(self):
        ds = parse_libsvm("1 1:1.0\n2\n")
        assert ds.dense()[1].tolist() == [0.0]

    def test_negative_and_float_integer_labels(self):
        ds = parse_libsvm("-1 1:1.0\n+1 1:2.0\n1.0 1:3.0\n")
        # ascending original order: -1 -> 0, 1 -> 1
        assert ds.label_map == {-1: 0, 1: 1}
        assert ds.y.tolist() == [0, 1, 1]

    def test_accepts_line_iterables(self):
        ds = parse_libsvm(["1 1:1.0", "2 2:1.0"])
        assert ds.n == 2 and ds.d == 2

    def test_min_dim_widens(self):
        ds = parse_libsvm("1 1:1.0\n", min_dim=5)
        assert ds.d == 5

    @pytest.mark.parametrize(
        "text,fragment",
        [
            ("x 1:1.0\n", "label"),
            ("1.5 1:1.0\n", "label"),
            ("1 0:1.0\n", "index"),
            ("1 a:1.0\n", "index"),
            ("1 2:1.0 2:2.0\n", "increase"),
            ("1 3:1.0 2:2.0\n", "increase"),
            ("1 1:nosuch\n", "value"),
            ("1 1:nan\n", "finite"),
            ("1 1:inf\n", "finite"),
            ("1 1\n", "idx:val"),
        ],
    )
    def test_malformed_lines_raise_with_line_number(self, text, fragment):
        with pytest.raises(ParseError) as exc:
            parse_libsvm("1 1:1.0\n" + text)
        assert exc.value.line == 2
        assert str(exc.value).startswith("line 2:")
        assert fragment in str(exc.value)

    def test_empty_stream_rejected(self):
        with pytest.raises(ParseError):
            parse_libsvm("# only a comment\n")


class TestDataset:
    def test_rows_are_read_only(self, tiny_dataset):
        with pytest.raises(ValueError):
            tiny_dataset.y[0] = 5

    def test_instance_accessor(self, tiny_dataset):
        inst = tiny_dataset.instance(0)
        assert inst.label == 0
        assert inst.features.entries == ((0, 1.0), (2, 0.5))
        assert inst.features.to_dense(3).tolist() == [1.0, 0.0, 0.5]

    def test_iteration_matches_instance(self, tiny_dataset):
        labels = [inst.label for inst in tiny_dataset]
        assert labels == tiny_dataset.y.tolist()

    def test_row_squared_norms(self, tiny_dataset):
        expected = (tiny_dataset.dense() ** 2).sum(axis=1)
        assert np.allclose(tiny_dataset.row_squared_norms(), expected)

    def test_subset_keeps_label_space(self, tiny_dataset):
        sub = tiny_dataset.subset([2, 3])
        assert sub.n == 2
        assert sub.m == 2  # label space unchanged even if a class is absent
        assert sub.y.tolist() == [1, 1]

    def test_with_dim_widens_only(self, tiny_dataset):
        wide = tiny_dataset.with_dim(7)
        assert wide.d == 7
        assert np.array_equal(wide.dense()[:, :3], tiny_dataset.dense())
        with pytest.raises(ValueError):
            tiny_dataset.with_dim(2)

    def test_label_map_validation(self):
        X = sp.csr_matrix(np.eye(2))
        with pytest.raises(ValueError, match="0..m-1"):
            Dataset(X, np.array([0, 1]), {1: 0, 2: 2})
        with pytest.raises(ValueError, match="ascend"):
            Dataset(X, np.array([0, 1]), {1: 1, 2: 0})
        with pytest.raises(ValueError, match="label outside"):
            Dataset(X, np.array([0, 5]), {1: 0, 2: 1})

    def test_non_finite_feature_rejected(self):
        X = sp.csr_matrix(np.array([[np.inf]]))
        with pytest.raises(ValueError, match="finite"):
            Dataset(X, np.array([0]), {1: 0})

    def test_dense_cache_refuses_huge_matrices(self):
        X = sp.csr_matrix((3_000_000, 10))
        ds = Dataset(X, np.zeros(3_000_000, dtype=np.int64), {1: 0})
        with pytest.raises(ValueError, match="dense cache"):
            ds.dense()


class TestRoundTrip:
    def test_dump_parse_identity(self, blob_dataset):
        again = parse_libsvm(dump_libsvm(blob_dataset), min_dim=blob_dataset.d)
        assert again == blob_dataset

    def test_dump_uses_original_labels(self, tiny_dataset):
        text = dump_libsvm(tiny_dataset)
        first_labels = [line.split()[0] for line in text.strip().split("\n")]
        assert first_labels == ["1", "1", "2", "2", "1"]

    def test_values_round_trip_exactly(self):
        ds = parse_libsvm("1 1:0.1\n2 1:3.141592653589793\n")
        again = parse_libsvm(dump_libsvm(ds))
        assert np.array_equal(again.X.data, ds.X.data)


class TestAlign:
    def test_widens_to_common_dimension(self):
        train = parse_libsvm("1 1:1.0 4:1.0\n2 1:2.0\n")
        test = parse_libsvm("1 2:1.0\n2 6:1.0\n")
        a, b = align(train, test)
        assert a.d == b.d == 6

    def test_test_labels_mapped_through_train_space(self):
        train = parse_libsvm("5 1:1.0\n9 1:2.0\n")
        test = parse_libsvm("9 1:1.0\n5 1:1.0\n")
        _, b = align(train, test)
        assert b.y.tolist() == [1, 0]
        assert b.label_map == {5: 0, 9: 1}

    def test_unseen_test_label_rejected(self):
        train = parse_libsvm("1 1:1.0\n2 1:2.0\n")
        test = parse_libsvm("3 1:1.0\n")
        with pytest.raises(ValueError, match="label"):
            align(train, test)
