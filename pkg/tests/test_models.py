import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from stan.models import (Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, assemble_fake_sequence,
                         context_of, load_discriminator, load_generator, load_state, parameter_count, save_checkpoint)

# Output sizes at 224x224 input: generator (h, w, c), discriminator (l, h, w, c).
GENERATOR_TABLE = [
    ("Conv1", (112, 112, 16)),
    ("Conv2", (56, 56, 32)),
    ("Conv3", (28, 28, 64)),
    ("Conv4", (28, 28, 128)),
    ("Forward ConvLSTM", (28, 28, 64)),
    ("Backward ConvLSTM", (28, 28, 64)),
    ("Combined ConvLSTM", (28, 28, 128)),
    ("DeConv1", (28, 28, 64)),
    ("DeConv2", (56, 56, 32)),
    ("DeConv3", (112, 112, 16)),
    ("DeConv4", (224, 224, 1)),
]
DISCRIMINATOR_TABLE = [
    ("3D Conv1", (7, 112, 112, 32)),
    ("3D Conv2", (5, 56, 56, 64)),
    ("3D Conv3", (3, 28, 28, 128)),
    ("3D Conv4", (1, 14, 14, 256)),
    ("3D Conv5", (1, 7, 7, 512)),
    ("3D Conv6", (1, 7, 7, 1)),
]


def generator_shapes(size=224, base=16):
    g = Generator(GeneratorConfig(size, base))
    trace = []
    with torch.no_grad():
        out = g(torch.zeros(1, 10, 1, size, size), trace)
    seen, rows = set(), []
    for name, shape in trace:  # the encoder runs once per frame; keep the first
        if name not in seen:
            seen.add(name)
            rows.append((name, (shape[2], shape[3], shape[1])))
    return rows, out


def discriminator_shapes(size=224, base=16):
    d = Discriminator(DiscriminatorConfig(size, base))
    trace = []
    with torch.no_grad():
        out = d(torch.zeros(1, 11, 1, size, size), trace)
    return [(n, (s[2], s[3], s[4], s[1])) for n, s in trace], out


def test_generator_table_shapes():
    rows, out = generator_shapes()
    assert rows == GENERATOR_TABLE
    assert out.shape == (1, 1, 224, 224)


def test_discriminator_table_shapes():
    rows, out = discriminator_shapes()
    assert rows == DISCRIMINATOR_TABLE
    assert out.shape == (1, 7, 7)


def test_desk_shapes():
    g = Generator(GeneratorConfig(64, 4))
    d = Discriminator(DiscriminatorConfig(64, 4))
    assert g(torch.zeros(2, 10, 1, 64, 64)).shape == (2, 1, 64, 64)
    assert d(torch.zeros(2, 11, 1, 64, 64)).shape == (2, 2, 2)
    assert DiscriminatorConfig(64).patch_grid == 2
    assert DiscriminatorConfig(224).patch_grid == 7


def test_zero_decoder_gives_zero_frame():
    g = Generator(GeneratorConfig(32, 2))
    with torch.no_grad():
        for layer in g.decoder:
            layer.weight.zero_()
            layer.bias.zero_()
    assert torch.all(g(torch.randn(1, 10, 1, 32, 32)) == 0)


def test_zero_final_layer_gives_half():
    d = Discriminator(DiscriminatorConfig(32, 2))
    with torch.no_grad():
        d.layers[-1].weight.zero_()
        d.layers[-1].bias.zero_()
    assert torch.all(d(torch.randn(3, 11, 1, 32, 32)) == 0.5)


@settings(max_examples=10)
@given(seed=st.integers(0, 2**16), scale=st.floats(0.1, 50))
def test_output_ranges(seed, scale):
    gen = torch.Generator().manual_seed(seed)
    torch.manual_seed(seed)
    g, d = Generator(GeneratorConfig(16, 2)), Discriminator(DiscriminatorConfig(16, 2))
    seq = torch.randn(2, 11, 1, 16, 16, generator=gen) * scale
    with torch.no_grad():
        out, probs = g(context_of(seq)), d(seq)
    assert torch.all(out.abs() <= 1) and torch.isfinite(out).all()
    assert torch.all(probs >= 0) and torch.all(probs <= 1) and torch.isfinite(probs).all()


def test_generator_rejects_bad_windows():
    g = Generator(GeneratorConfig(16, 2))
    with pytest.raises(ValueError, match="window"):
        g(torch.zeros(1, 9, 1, 16, 16))
    with pytest.raises(ValueError, match="frames"):
        g(torch.zeros(1, 10, 1, 24, 24))


def test_discriminator_rejects_bad_length():
    with pytest.raises(ValueError, match="sequence"):
        Discriminator(DiscriminatorConfig(16, 2))(torch.zeros(1, 10, 1, 16, 16))


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(input_size=60)
    with pytest.raises(ValueError):
        GeneratorConfig(half_window=0)
    with pytest.raises(ValueError):
        DiscriminatorConfig(sequence_length=9)
    assert DiscriminatorConfig().channels == (32, 64, 128, 256, 512, 1)
    assert GeneratorConfig().hidden == 64


def test_assemble_fake_sequence():
    seq = torch.randn(2, 11, 1, 8, 8)
    ctx = context_of(seq)
    gen = torch.randn(2, 1, 8, 8)
    fake = assemble_fake_sequence(ctx, gen)
    assert fake.shape == seq.shape
    assert torch.equal(fake[:, 5], gen)
    idx = [0, 1, 2, 3, 4, 6, 7, 8, 9, 10]
    assert torch.equal(fake[:, idx], seq[:, idx])
    assert torch.equal(assemble_fake_sequence(ctx, seq[:, 5]), seq)
    with pytest.raises(ValueError):
        assemble_fake_sequence(ctx, torch.zeros(2, 1, 4, 4))


def test_parameter_count_is_config_function():
    counts = set()
    for seed in range(3):
        torch.manual_seed(seed)
        counts.add(parameter_count(Generator(GeneratorConfig(64, 4))))
    assert len(counts) == 1
    # four encoder convs, three ConvLSTM cells, four deconvs at canonical width
    b, hid = 16, 64
    expected = (1 * b * 25 + b) + (b * 2 * b * 25 + 2 * b) + (2 * b * 4 * b * 9 + 4 * b) + (4 * b * 8 * b * 9 + 8 * b)
    expected += 2 * (4 * hid * (8 * b + hid) * 9 + 4 * hid) + (4 * 2 * hid * 4 * hid * 9 + 8 * hid)
    expected += (2 * hid * 4 * b * 9 + 4 * b) + (4 * b * 2 * b * 9 + 2 * b) + (2 * b * b * 25 + b) + (b * 25 + 1)
    assert parameter_count(Generator()) == expected


def test_checkpoint_round_trip_bit_exact(tmp_path):
    torch.manual_seed(0)
    g = Generator(GeneratorConfig(32, 2))
    d = Discriminator(DiscriminatorConfig(32, 2))
    save_checkpoint(g, tmp_path / "generator", g.config)
    save_checkpoint(d, tmp_path / "discriminator", d.config)
    g2, d2 = load_generator(tmp_path / "generator"), load_discriminator(tmp_path / "discriminator")
    for a, b in zip(g.state_dict().values(), g2.state_dict().values()):
        assert torch.equal(a, b)
    for a, b in zip(d.state_dict().values(), d2.state_dict().values()):
        assert torch.equal(a, b)
    # saving the reloaded model reproduces the blob byte for byte
    save_checkpoint(g2, tmp_path / "again", g2.config)
    assert (tmp_path / "again.bin").read_bytes() == (tmp_path / "generator.bin").read_bytes()


def test_checkpoint_manifest_layout(tmp_path):
    g = Generator(GeneratorConfig(16, 1))
    save_checkpoint(g, tmp_path / "g", g.config)
    state, manifest = load_state(tmp_path / "g")
    assert manifest["byte_order"] == "little"
    offset = 0
    for e in manifest["tensors"]:
        assert e["dtype"] == "float32" and e["offset"] == offset
        assert e["nbytes"] == 4 * int(np.prod(e["shape"]))
        offset += e["nbytes"]
    assert offset == (tmp_path / "g.bin").stat().st_size
    first = manifest["tensors"][0]
    raw = np.frombuffer((tmp_path / "g.bin").read_bytes(), "<f4", count=first["nbytes"] // 4)
    np.testing.assert_array_equal(raw.reshape(first["shape"]), g.state_dict()[first["name"]].numpy())
