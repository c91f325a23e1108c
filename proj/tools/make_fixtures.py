#!/usr/bin/env python3
"""Regenerates the frozen test fixtures under tests/data.

Produces:
  * three trained tokenizers (byte-level BPE, split-regex BPE, metaspace BPE
    with byte fallback) plus reference encodings from the `tokenizers` package;
  * four tiny random-weight causal LMs in Hugging Face layout (llama, qwen2,
    gpt2, phi3) plus reference per-layer log-probabilities computed with
    `transformers` via forward hooks on every decoder block;
  * small synthetic QA corpora in CoQA, QuAC, CondaQA and generic JSONL layout.

The C++ tests only read the emitted files; this script is not needed to build.
Requires: torch, transformers, tokenizers, safetensors.
"""

import json
import math
import os
import random
import sys

import torch
from tokenizers import Regex, Tokenizer, decoders, models, normalizers
from tokenizers import pre_tokenizers, trainers

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests", "data")

WORDS = (
    "the a an fish ocean bottle note friend papa girl boy lived swam played day "
    "long looked saw floated heads read wrote asked told wants write send find "
    "another what who where when why how was were is are did does do name "
    "excited happy small big blue green red river forest city house school "
    "teacher doctor king queen castle garden tree flower bird cat dog horse "
    "morning evening night summer winter year old new first last many some "
    "because after before while under over near far into from with without "
    "and or but not never always often sometimes answer question story "
    "Asta Sharkie London Paris Maria John 1983 2001 42 7"
).split()

PUNCT = [".", ",", "?", "!", ";", ":"]

GPT2_PATTERN = (
    r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"
)
LLAMA3_PATTERN = (
    r"(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\r\n\p{L}\p{N}]?\p{L}+|\p{N}{1,3}|"
    r" ?[^\s\p{L}\p{N}]+[\r\n]*|\s*[\r\n]+|\s+(?!\S)|\s+"
)


def sentence(rng, lo=4, hi=14):
    n = rng.randint(lo, hi)
    words = [rng.choice(WORDS) for _ in range(n)]
    words[0] = words[0].capitalize()
    return " ".join(words) + rng.choice(PUNCT[:1] * 4 + PUNCT)


def paragraph(rng, n_words):
    out, count = [], 0
    while count < n_words:
        s = sentence(rng)
        out.append(s)
        count += len(s.split())
    return " ".join(out)


def corpus(seed=7, n=3000):
    rng = random.Random(seed)
    lines = [sentence(rng) for _ in range(n)]
    lines += ["Don't stop! It's 12:30, isn't it?", "naïve café — über straße",
              "Is this answerable?\nAnswer the question or say don't know."]
    return lines


# ---------------------------------------------------------------- tokenizers

def build_bytelevel(lines):
    tok = Tokenizer(models.BPE())
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=420, special_tokens=["<|endoftext|>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(), show_progress=False)
    tok.train_from_iterator(lines, trainer)
    return tok


def build_split_regex(lines):
    tok = Tokenizer(models.BPE(ignore_merges=True))
    tok.pre_tokenizer = pre_tokenizers.Sequence([
        pre_tokenizers.Split(Regex(LLAMA3_PATTERN), behavior="isolated", invert=False),
        pre_tokenizers.ByteLevel(add_prefix_space=False, use_regex=False),
    ])
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=480, special_tokens=["<|begin_of_text|>", "<|end_of_text|>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(), show_progress=False)
    tok.train_from_iterator(lines, trainer)
    return tok


def build_metaspace(lines):
    tok = Tokenizer(models.BPE(unk_token="<unk>", byte_fallback=True))
    tok.pre_tokenizer = pre_tokenizers.Metaspace(replacement="▁", prepend_scheme="first")
    tok.decoder = decoders.Sequence([
        decoders.Replace("▁", " "), decoders.ByteFallback(), decoders.Fuse(),
        decoders.Strip(content=" ", left=1, right=0)])
    specials = ["<unk>", "<s>", "</s>"] + ["<0x%02X>" % b for b in range(256)]
    trainer = trainers.BpeTrainer(vocab_size=600, special_tokens=specials, show_progress=False)
    tok.train_from_iterator(lines, trainer)
    return tok


TOKENIZER_PROBES = [
    "", "abc", "Hello world", "The fish swam in the ocean.",
    "What was the name of the fish?", "Is this answerable?",
    "Don't stop! It's 12:30, isn't it?", "  leading and trailing  ",
    "line one\nline two\n\nline three", "numbers 1234567 and 3.14159",
    "Asta's papa read the note.\nIs this answerable? Were they excited?",
    "tabs\tand   multiple    spaces", "UPPER lower MiXeD",
    "naïve café — über straße", "emoji 🙂 ok", "中文 text",
]


def char_to_byte_offsets(text, offsets):
    # tokenizers reports offsets in characters; the C++ side works in bytes.
    prefix = [0]
    for ch in text:
        prefix.append(prefix[-1] + len(ch.encode("utf-8")))
    return [[prefix[a], prefix[b]] for a, b in offsets]


def tokenizer_reference(tok):
    out = []
    for s in TOKENIZER_PROBES:
        enc = tok.encode(s, add_special_tokens=False)
        out.append({
            "text": s,
            "ids": enc.ids,
            "offsets": char_to_byte_offsets(s, enc.offsets),
            "ascii": all(ord(c) < 128 for c in s),
            "decoded": tok.decode(enc.ids, skip_special_tokens=False),
        })
    return out


# -------------------------------------------------------------------- models

def scale_weights(model, scale, seed):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in sorted(model.named_parameters()):
            if "norm" in name or "ln_" in name:
                p.copy_(1.0 + 0.1 * torch.randn(p.shape, generator=g))
            elif p.dim() == 1:
                p.copy_(0.1 * torch.randn(p.shape, generator=g))
            else:
                p.copy_(scale * torch.randn(p.shape, generator=g) / math.sqrt(p.shape[-1]))


def block_modules(model, kind):
    if kind == "gpt2":
        return model.transformer.h, model.transformer.ln_f
    return model.model.layers, model.model.norm


def model_reference(model, kind, inputs):
    blocks, final_norm = block_modules(model, kind)
    head = model.lm_head
    captured = []

    def hook(_mod, _inp, out):
        captured.append((out[0] if isinstance(out, tuple) else out).detach().clone())

    handles = [b.register_forward_hook(hook) for b in blocks]
    cases = []
    for ids in inputs:
        captured.clear()
        x = torch.tensor([ids])
        with torch.no_grad():
            logits = model(x).logits[0].double()
            lens_norm, lens_raw = [], []
            for h in captured:
                h = h[0]
                for store, hh in ((lens_norm, final_norm(h)), (lens_raw, h)):
                    lp = torch.log_softmax(head(hh).double(), dim=-1) / math.log(2.0)
                    store.append([lp[t, ids[t + 1]].item() for t in range(len(ids) - 1)])
            final = torch.log_softmax(logits, dim=-1) / math.log(2.0)
            final_rows = [final[t, ids[t + 1]].item() for t in range(len(ids) - 1)]
            err = max(abs(a - b) for a, b in zip(lens_norm[-1], final_rows))
            assert err < 1e-4, err
            cases.append({
                "ids": ids,
                "lens_final_norm": lens_norm,
                "lens_raw": lens_raw,
                "final": final_rows,
                "final_entropy_last": float(-((final[-1] * math.log(2.0)).exp() * final[-1]).sum()),
            })
    for h in handles:
        h.remove()
    return cases


def save_model(name, model, kind, tok, bos, eos, seed):
    d = os.path.join(OUT, "models", name)
    os.makedirs(d, exist_ok=True)
    scale_weights(model, 2.0, seed)
    model.eval()
    model.save_pretrained(d)
    tok.save(os.path.join(d, "tokenizer.json"))
    with open(os.path.join(d, "tokenizer_config.json"), "w") as f:
        json.dump({"bos_token": bos, "eos_token": eos}, f, indent=2)
    gen = os.path.join(d, "generation_config.json")
    if os.path.exists(gen):
        os.remove(gen)
    rng = random.Random(seed)
    texts = ["The fish swam in the ocean. Is this answerable?",
             "Asta lived in the ocean.\nWhat was the name of the fish?"]
    inputs = []
    bos_id = tok.token_to_id(bos)
    for t in texts:
        inputs.append([bos_id] + tok.encode(t, add_special_tokens=False).ids)
    inputs.append([bos_id] + [rng.randrange(tok.get_vocab_size()) for _ in range(9)])
    with open(os.path.join(d, "reference.json"), "w") as f:
        json.dump({"cases": model_reference(model, kind, inputs)}, f)


def build_models(tok_bytelevel, tok_split, tok_meta):
    from transformers import (GPT2Config, GPT2LMHeadModel, LlamaConfig, LlamaForCausalLM,
                              Phi3Config, Phi3ForCausalLM, Qwen2Config, Qwen2ForCausalLM)
    torch.manual_seed(0)
    v = tok_split.get_vocab_size()
    llama = LlamaForCausalLM(LlamaConfig(
        vocab_size=v, hidden_size=64, intermediate_size=128, num_hidden_layers=3,
        num_attention_heads=4, num_key_value_heads=2, max_position_embeddings=2048,
        rms_norm_eps=1e-5, tie_word_embeddings=False,
        bos_token_id=tok_split.token_to_id("<|begin_of_text|>"),
        eos_token_id=tok_split.token_to_id("<|end_of_text|>"),
        rope_scaling={"rope_type": "llama3", "factor": 8.0, "low_freq_factor": 1.0,
                      "high_freq_factor": 4.0, "original_max_position_embeddings": 16}))
    save_model("tiny-llama", llama, "llama", tok_split, "<|begin_of_text|>", "<|end_of_text|>", 1)

    v = tok_bytelevel.get_vocab_size()
    eot = tok_bytelevel.token_to_id("<|endoftext|>")
    qwen = Qwen2ForCausalLM(Qwen2Config(
        vocab_size=v, hidden_size=48, intermediate_size=96, num_hidden_layers=2,
        num_attention_heads=6, num_key_value_heads=2, max_position_embeddings=1024,
        rms_norm_eps=1e-6, tie_word_embeddings=True, bos_token_id=eot, eos_token_id=eot))
    save_model("tiny-qwen2", qwen, "llama", tok_bytelevel, "<|endoftext|>", "<|endoftext|>", 2)

    gpt2 = GPT2LMHeadModel(GPT2Config(
        vocab_size=v, n_embd=64, n_layer=2, n_head=4, n_positions=512,
        bos_token_id=eot, eos_token_id=eot))
    save_model("tiny-gpt2", gpt2, "gpt2", tok_bytelevel, "<|endoftext|>", "<|endoftext|>", 3)

    v = tok_meta.get_vocab_size()
    phi3 = Phi3ForCausalLM(Phi3Config(
        vocab_size=v, hidden_size=64, intermediate_size=96, num_hidden_layers=2,
        num_attention_heads=4, num_key_value_heads=4, max_position_embeddings=1024,
        original_max_position_embeddings=1024, rms_norm_eps=1e-5, tie_word_embeddings=False,
        bos_token_id=tok_meta.token_to_id("<s>"), eos_token_id=tok_meta.token_to_id("</s>"),
        pad_token_id=tok_meta.token_to_id("</s>")))
    save_model("tiny-phi3", phi3, "llama", tok_meta, "<s>", "</s>", 4)


# ------------------------------------------------------------------ datasets

def question(rng):
    n = rng.choice([4, 5, 5, 6, 6, 7])
    words = [rng.choice("what who where when why how did was".split())]
    words += [rng.choice(WORDS) for _ in range(n - 1)]
    return " ".join(words).capitalize() + "?"


def build_datasets():
    d = os.path.join(OUT, "datasets")
    os.makedirs(d, exist_ok=True)
    rng = random.Random(2024)

    # CoQA layout: 50 question records over stories whose lengths average
    # 271 words, five turns per story.
    stories = []
    for i in range(10):
        story = paragraph(rng, rng.randint(240, 300))
        qs, ans = [], []
        for turn in range(1, 6):
            unans = rng.random() < 0.4
            q = question(rng)
            a = "unknown" if unans else rng.choice(story.split()).strip(".,?!;:")
            qs.append({"input_text": q, "turn_id": turn})
            ans.append({"input_text": a, "span_text": "" if unans else a, "turn_id": turn})
        stories.append({"id": "coqa-%02d" % i, "source": "synthetic", "story": story,
                        "questions": qs, "answers": ans})
    with open(os.path.join(d, "coqa_like.json"), "w") as f:
        json.dump({"version": "1.0", "data": stories}, f, indent=1)

    # QuAC layout (SQuAD-style nesting with CANNOTANSWER).
    data = []
    for i in range(6):
        ctx = paragraph(rng, rng.randint(120, 200)) + " CANNOTANSWER"
        qas = []
        for turn in range(4):
            unans = rng.random() < 0.5
            a = "CANNOTANSWER" if unans else rng.choice(ctx.split()[:-1]).strip(".,?!;:")
            qas.append({"id": "quac-%d_q#%d" % (i, turn), "question": question(rng),
                        "answers": [{"text": a, "answer_start": ctx.find(a)}],
                        "orig_answer": {"text": a, "answer_start": ctx.find(a)}})
        data.append({"title": "doc %d" % i, "paragraphs": [{"id": "quac-%d" % i,
                                                            "context": ctx, "qas": qas}]})
    with open(os.path.join(d, "quac_like.json"), "w") as f:
        json.dump({"data": data}, f, indent=1)

    # CondaQA layout: JSON lines with sentence1/sentence2/label.
    with open(os.path.join(d, "condaqa_like.jsonl"), "w") as f:
        for i in range(12):
            label = ["YES", "NO", "DON'T KNOW"][i % 3]
            rec = {"PassageID": "p%d" % (i // 3), "QuestionID": "q%d" % i,
                   "sentence1": paragraph(rng, rng.randint(60, 110)),
                   "sentence2": question(rng), "label": label}
            f.write(json.dumps(rec) + "\n")

    # Generic JSONL, including one malformed record (no question).
    with open(os.path.join(d, "generic.jsonl"), "w") as f:
        f.write(json.dumps({"id": "g1", "context": "Asta lived in the ocean.",
                            "question": "Where did Asta live?", "answers": ["the ocean"],
                            "answerable": True}) + "\n")
        f.write(json.dumps({"id": "g2", "context": "Asta lived in the ocean.",
                            "question": "Were they excited?", "answers": [],
                            "answerable": False}) + "\n")
        f.write(json.dumps({"id": "g3", "context": "No question here.",
                            "answers": ["x"], "answerable": True}) + "\n")
        f.write("{not json\n")


def main():
    lines = corpus()
    toks = {
        "bytelevel": build_bytelevel(lines),
        "split_regex": build_split_regex(lines),
        "metaspace": build_metaspace(lines),
    }
    tdir = os.path.join(OUT, "tokenizers")
    os.makedirs(tdir, exist_ok=True)
    for name, tok in toks.items():
        tok.save(os.path.join(tdir, name + ".json"))
        with open(os.path.join(tdir, name + ".reference.json"), "w") as f:
            json.dump(tokenizer_reference(tok), f, indent=1, ensure_ascii=False)
    build_models(toks["bytelevel"], toks["split_regex"], toks["metaspace"])
    build_datasets()
    return 0


if __name__ == "__main__":
    sys.exit(main())
