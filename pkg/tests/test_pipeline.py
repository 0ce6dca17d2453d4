import numpy as np
import pytest

from egap.adapt import AdaptationConfig
from egap.errors import FormatError
from egap.latents import Dist, LatentTensor, SideInfo
from egap.pipeline import (
    Instance,
    analyze,
    channel_dists,
    default_configs,
    encode_instance,
    factorized_tables,
    report,
    synth_instance,
    unpack_and_decode,
)


def test_defaults():
    assert default_configs("factorized") == {"factorized": AdaptationConfig("gmm", K=2, T=64)}
    hyper = default_configs("hyperprior")
    assert hyper["factorized"] == AdaptationConfig("gmm", K=1, T=32)
    assert hyper["hyperprior"] == AdaptationConfig("zero-mean-gaussian", T=32)


def test_instance_validation():
    tables = factorized_tables([Dist("gaussian", 1.0)] * 2)
    with pytest.raises(ValueError, match="one table per channel"):
        Instance(LatentTensor(np.zeros((2, 2, 3), np.int64)), tables)
    main = LatentTensor(np.zeros((2, 2, 2), np.int64))
    with pytest.raises(ValueError, match="side latent"):
        Instance(main, tables, SideInfo(np.zeros(8), np.ones(8)))
    with pytest.raises(ValueError, match="length mismatch"):
        Instance(main, tables, SideInfo(np.zeros(7), np.ones(7)), LatentTensor(np.zeros((1, 1, 2), np.int64), "side"))


def test_channel_spread():
    d = channel_dists(Dist("gaussian", 2.0), 3, 4.0)
    assert [x.scale for x in d] == pytest.approx([0.5, 2.0, 8.0])
    with pytest.raises(ValueError):
        channel_dists(Dist("gaussian", 2.0), 3, 0.5)


def test_t_larger_than_table_count_is_clamped():
    inst = synth_instance(1, (8, 8, 3), Dist("gaussian", 1.0), Dist("gaussian", 2.0), "factorized").instance
    (r,) = analyze(inst, {"factorized": AdaptationConfig("zero-mean-gaussian", T=50)})
    assert len(r.record.choices) == 3
    rep = report([r])
    assert rep.row("factorized").gain <= rep.row("factorized").gap


def test_decoder_input_checks():
    si = synth_instance(2, (8, 8, 4), Dist("gaussian", 1.0), Dist("gaussian", 2.0))
    inst = si.instance
    data = encode_instance(inst).data
    with pytest.raises(FormatError, match="side info"):
        unpack_and_decode(data, inst.tables)
    with pytest.raises(FormatError, match="tables"):
        unpack_and_decode(data, inst.tables[:-1], inst.side_info)
    with pytest.raises(FormatError, match="length"):
        unpack_and_decode(data, inst.tables, SideInfo(np.zeros(3), np.ones(3)))


def test_encode_report_includes_coded_bits():
    inst = synth_instance(4, (16, 16, 4), Dist("gaussian", 1.0), Dist("gaussian", 2.0)).instance
    res = encode_instance(inst)
    rep = res.report("demo")
    assert rep.label == "demo"
    for row in rep.rows:
        assert row.stats.coded_bits is not None and row.stats.coded_bits >= row.stats.adapted_bits - 64
