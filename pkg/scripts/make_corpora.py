"""Regenerate the bundled synthetic corpora under src/narrlens/data/.

    python scripts/make_corpora.py
"""
from __future__ import annotations

import random
import shutil
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "narrlens" / "data"
N_PER_DOMAIN = 30
MULTI_EVERY = 4  # every 4th article carries two narratives
LANGS = ["BG", "EN", "HI", "PT", "RU"]
HEADER = "main_id\tmain_def\tmain_example\tmain_meta\tsub_id\tsub_def\tsub_example\tsub_meta"

# narrative -> (definition, example, metadata, {sub: (definition, example, metadata, sentences)})
CC = {
    "CC: Criticism of climate policies": (
        "Climate policies are portrayed as ineffective, costly or harmful.",
        "The carbon tax has only made life more expensive for ordinary families.",
        "Targets policy instruments rather than climate science.",
        {
            "Climate policies are ineffective": (
                "Claims that climate measures fail to reduce emissions or warming.",
                "Despite billions spent, emissions keep rising.",
                "Focus on outcomes of policies.",
                ["Despite billions spent on subsidies, national emissions kept rising this year.",
                 "The emission trading scheme failed to cut a single tonne of carbon.",
                 "Wind farm targets were missed again while coal plants stayed open.",
                 "Experts admit the green transition programme delivered no measurable cooling."],
            ),
            "Climate policies have negative impact on the economy": (
                "Claims that climate measures damage jobs, prices or industry.",
                "Factories are closing because of green regulations.",
                "Economic framing.",
                ["Energy bills doubled after the green levy was introduced.",
                 "Steel factories announced layoffs blaming expensive carbon permits.",
                 "Farmers say fertiliser rules will bankrupt rural businesses.",
                 "Petrol prices soared and households cut spending on food."],
            ),
        },
    ),
    "CC: Hidden plots by secret schemes of powerful groups": (
        "Climate action is presented as a cover for the secret goals of powerful groups.",
        "Globalists use climate change as an excuse to control the population.",
        "Conspiratorial framing; actors are vague elites.",
        {
            "Blaming global elites": (
                "Global elites are blamed for orchestrating climate policy for their own benefit.",
                "Billionaires in Davos decide our future behind closed doors.",
                "Names elites, globalists or secret clubs.",
                ["Billionaires meeting in Davos quietly decided the new climate rules.",
                 "A small circle of globalist bankers profits from every green bond.",
                 "Secret foundations funded the activists who blocked the roads.",
                 "Unelected elites in foreign capitals dictate what we may eat."],
            ),
            "The climate agenda has hidden motives": (
                "The climate agenda is said to pursue goals other than protecting the environment.",
                "Sustainability targets are a pretext for depopulation.",
                "Ulterior motive framing.",
                ["Behind the sustainability slogans lies a plan to reduce the population.",
                 "The real purpose of the climate agenda is control over private property.",
                 "Officials admit privately that net zero is about digital surveillance.",
                 "Green passports are a first step toward rationing personal freedom."],
            ),
        },
    ),
    "CC: Amplifying Climate Fears": (
        "Climate change is described in alarmist, catastrophic terms.",
        "Within ten years the planet will be uninhabitable.",
        "Fear-based framing, often with exaggerated timelines.",
        {
            "Earth will be uninhabitable soon": (
                "Claims that the planet will soon be unable to support life.",
                "Large parts of the world will be too hot to live in by 2030.",
                "Short, dramatic timelines.",
                ["Scientists warn entire continents will be too hot for humans within a decade.",
                 "By the end of this decade the oceans will boil and crops will wither.",
                 "No region of the planet will remain habitable if warming continues.",
                 "The last liveable summers are already behind us."],
            ),
            "Doomsday scenarios for humans": (
                "Depicts imminent collapse of human civilisation due to climate change.",
                "Billions will die in climate wars and famine.",
                "Apocalyptic imagery.",
                ["Billions will perish in famines and climate wars before mid-century.",
                 "Civilisation faces total collapse as cities drown one after another.",
                 "Mass extinction of humanity is now unavoidable according to the activists.",
                 "Hospitals will overflow as deadly heat waves sweep every city."],
            ),
        },
    ),
}

URW = {
    "URW: Blaming the war on others rather than the invader": (
        "Responsibility for the war is shifted away from Russia onto other actors.",
        "NATO expansion forced Russia to act.",
        "Shifts blame; frequently cites NATO or Kyiv.",
        {
            "The West are the aggressors": (
                "Western countries and NATO are portrayed as the real aggressors.",
                "NATO provoked the conflict by moving to Russia's borders.",
                "Aggressor reversal toward the West.",
                ["NATO provoked the conflict by moving its bases to the Russian border.",
                 "Washington planned this war for years and used Europe as a shield.",
                 "Western weapons deliveries are prolonging the bloodshed deliberately.",
                 "The alliance ignored every security guarantee Moscow requested."],
            ),
            "Ukraine is the aggressor": (
                "Ukraine is portrayed as having started or escalated the war.",
                "Kyiv shelled Donbas for eight years before the operation.",
                "Aggressor reversal toward Ukraine.",
                ["Kyiv shelled the Donbas villages for eight years before anyone intervened.",
                 "Ukrainian drones attacked peaceful towns across the border again.",
                 "The regime in Kyiv refused every ceasefire and escalated the fighting.",
                 "Ukrainian battalions started the offensive that triggered the response."],
            ),
        },
    ),
    "URW: Discrediting Ukraine": (
        "Ukraine, its leaders or its institutions are portrayed negatively.",
        "The Ukrainian government is corrupt and controlled from abroad.",
        "Targets Ukrainian state and society.",
        {
            "Ukraine is a puppet of the West": (
                "Ukraine is described as lacking agency and controlled by Western powers.",
                "Every decision in Kyiv is approved in Washington first.",
                "Sovereignty denial.",
                ["Every decision in Kyiv is approved by advisers from Washington first.",
                 "The Ukrainian president reads speeches written in London.",
                 "Foreign curators run the ministries and the army in Kyiv.",
                 "Kyiv cannot negotiate because its Western masters forbid it."],
            ),
            "Discrediting Ukrainian government and officials and policies": (
                "Ukrainian officials and policies are depicted as corrupt or incompetent.",
                "Ministers stole aid money and bought villas.",
                "Corruption and incompetence claims.",
                ["Ministers in Kyiv stole the aid money and bought villas abroad.",
                 "Corruption scandals engulf the Ukrainian defence ministry once more.",
                 "Officials in Kyiv sold donated weapons on the black market.",
                 "The mobilisation policy is chaotic and officials take bribes for exemptions."],
            ),
        },
    ),
    "URW: Praise of Russia": (
        "Russia, its leadership or its armed forces are glorified.",
        "Russia stands strong and its economy thrives despite sanctions.",
        "Positive framing of Russia.",
        {
            "Russia is a guarantor of peace and prosperity": (
                "Russia is portrayed as a force for stability and economic growth.",
                "Moscow offers partnership and peace to the whole region.",
                "Stability and prosperity framing.",
                ["Moscow offers partnership, cheap energy and lasting peace to the region.",
                 "Russian mediation brought stability wherever diplomacy failed.",
                 "Trade with Russia is booming and living standards are rising.",
                 "Neighbouring nations thank Russia for humanitarian convoys and grain."],
            ),
            "Praise of Russian military might": (
                "Russian armed forces are depicted as invincible or superior.",
                "Hypersonic missiles make Russia unstoppable.",
                "Military glorification.",
                ["Hypersonic missiles make the Russian army unstoppable on any front.",
                 "Russian tank crews crushed the enemy lines in a single night.",
                 "Military analysts admit no force can match Russian artillery.",
                 "The new fighter jets outclass every Western aircraft."],
            ),
        },
    ),
}

# Sentences shared by every sub-narrative of a narrative.
CORE = {
    "CC: Criticism of climate policies": [
        "Critics say the climate policy package is a costly failure.",
        "The government climate policy keeps hurting taxpayers without results.",
        "Opposition leaders called the climate policy reckless and wasteful."],
    "CC: Hidden plots by secret schemes of powerful groups": [
        "Powerful groups are secretly steering the climate agenda.",
        "Insiders describe a hidden scheme run by powerful groups.",
        "The secret plan of powerful groups is finally being exposed."],
    "CC: Amplifying Climate Fears": [
        "Terrifying climate warnings spread panic among young people.",
        "The climate catastrophe is coming faster than anyone feared.",
        "Alarmed activists say the climate emergency means certain disaster."],
    "URW: Blaming the war on others rather than the invader": [
        "Moscow insists others bear the blame for starting this war.",
        "The war was forced upon Russia by its enemies, the commentator said.",
        "Responsibility for the war lies with those who provoked Moscow."],
    "URW: Discrediting Ukraine": [
        "Ukraine is described as a failed and dishonest state.",
        "Commentators mocked the Ukrainian leadership as incompetent.",
        "Ukraine lost all credibility after another scandal."],
    "URW: Praise of Russia": [
        "Russia stands strong, united and admired around the world.",
        "Glory to Russia, its people and its leadership, the host declared.",
        "Russia has proven its greatness once again."],
}

FILLER = {
    "CC": ["The conference drew delegates from many countries.",
           "Reporters asked the minister about the energy plan.",
           "The debate continued in parliament on Thursday."],
    "URW": ["The statement was broadcast on state television.",
            "Diplomats met in the capital for another round of talks.",
            "Correspondents reported from the region on Tuesday."],
    "Other": ["The city council approved a new budget for public libraries.",
              "A local football club celebrated its centenary with a parade.",
              "Weather forecasters expect mild temperatures this weekend.",
              "The museum opened an exhibition of medieval manuscripts.",
              "Commuters faced delays after a signal fault on the railway.",
              "A bakery won the regional prize for its sourdough bread."],
}


def sub_id(narrative: str, sub: str) -> str:
    return f"{narrative}: {sub}"


def taxonomy_lines(tax: dict) -> list[str]:
    lines = [HEADER]
    for nar, (nd, ne, nm, subs) in tax.items():
        for sub, (sd, se, sm, _) in subs.items():
            lines.append("\t".join([nar, nd, ne, nm, sub_id(nar, sub), sd, se, sm]))
    lines.append("\t".join(["Other", "No listed narrative applies.", "Routine local news.",
                            "Catch-all label.", "Other", "No listed sub-narrative applies.",
                            "Routine local news.", "Catch-all label."]))
    return lines


def write_lines(path: Path, lines: list[str]) -> None:
    path.write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")


def make_mini(rng: random.Random) -> None:
    root = DATA / "mini"
    if root.exists():
        shutil.rmtree(root)
    (root / "articles").mkdir(parents=True)
    write_lines(root / "taxonomy_cc.tsv", taxonomy_lines(CC))
    write_lines(root / "taxonomy_urw.tsv", taxonomy_lines(URW))

    ann, explain, refs = [], [], []
    counter = 0
    for domain, tax in (("CC", CC), ("URW", URW)):
        narratives = list(tax)
        for k in range(N_PER_DOMAIN):
            counter += 1
            lang = LANGS[counter % len(LANGS)]
            fname = f"{lang}_{domain}_{k:03d}.txt"
            chosen = [narratives[k % 3]]
            if k % MULTI_EVERY == MULTI_EVERY - 1:
                chosen.append(narratives[(k + 1) % 3])
            sents, subs_all, per_narr = [], [], {}
            for nar in chosen:
                subs = list(tax[nar][3])
                picked = subs if k % 5 == 0 else [subs[(k // 3) % 2]]
                per_narr[nar] = [sub_id(nar, s) for s in picked]
                sents += rng.sample(CORE[nar], 2)
                for s in picked:
                    sents += rng.sample(tax[nar][3][s][3], 2 // len(picked) or 1)
                subs_all += per_narr[nar]
            if len(chosen) == 1:
                # Pad single-narrative articles to the length of two-narrative ones.
                sents += rng.sample(FILLER[domain], 2) + rng.sample(FILLER["Other"], 2)
            rng.shuffle(sents)
            (root / "articles" / fname).write_text(" ".join(sents) + "\n", encoding="utf-8")
            ann.append(f"{fname}\t{';'.join(chosen)}\t{';'.join(subs_all)}")
            dom = chosen[0]
            explain.append(f"{fname}\t{dom}\t{';'.join(per_narr[dom])}")
            claim = tax[dom][3][per_narr[dom][0].split(': ')[-1]][3][0]
            refs.append(f"{fname}\tThe article frames events through the narrative that "
                        f"{tax[dom][0][0].rstrip('.').lower()}. It claims: {claim}")
    for k in range(6):
        counter += 1
        lang = LANGS[counter % len(LANGS)]
        fname = f"{lang}_OTH_{k:03d}.txt"
        sents = rng.sample(FILLER["Other"], 4)
        (root / "articles" / fname).write_text(" ".join(sents) + "\n", encoding="utf-8")
        ann.append(f"{fname}\tOther\tOther")
    write_lines(root / "annotations.tsv", sorted(ann))
    write_lines(root / "explain_input.tsv", explain)
    write_lines(root / "references.tsv", refs)
    (root / "config.yaml").write_text(MINI_CONFIG, encoding="utf-8")


MINI_CONFIG = """\
# Demo configuration for the bundled synthetic mini-corpus.
# Input paths are relative to this file; models/outputs to the working directory.
paths:
  taxonomy_cc: taxonomy_cc.tsv
  taxonomy_urw: taxonomy_urw.tsv
  articles: articles
  annotations: annotations.tsv
  models: narrlens-out/models
  outputs: narrlens-out
seed: 13
parallelism: 4
split_ratio: 0.8
fallback_k: 3
language_default: EN
eval_average: samples
embedder:
  backend: deterministic
  dim: 2048
chat:
  endpoint: https://api.openai.com/v1/chat/completions
  model_name: gpt-4o
  temperature: 0.0
retrieval:
  top_k: 5
  query_composition: label_plus_definition
training:
  epochs: 8
  batch_size: 8
  learning_rate: 2.0e-5
  adam_epsilon: 1.0e-8
  weight_decay: 0.05
  warmup_fraction: 0.1
loss:
  gamma: 2.0
  alpha: 0.25
"""

SEP_A = ["Glacier melt is accelerating as carbon emissions rise.",
         "Heatwaves and drought follow the warming trend.",
         "Scientists link the floods to rising sea temperatures."]
SEP_B = ["Artillery units shelled the frontline overnight.",
         "New sanctions target the pipeline operators.",
         "The brigade withdrew after the ceasefire collapsed."]
SEP_F = ["Officials spoke to reporters on Monday.", "The statement was published in the morning.",
         "Local residents gathered in the square.", "Further details are expected next week."]


def make_separable(rng: random.Random) -> None:
    root = DATA / "separable"
    if root.exists():
        shutil.rmtree(root)
    (root / "articles").mkdir(parents=True)
    rows = [HEADER,
            "CC: Warming\tArticle reports climate impacts.\tGlaciers melt.\t-\tCC: Warming: Impacts\t"
            "Physical impacts.\tDrought.\t-",
            "CC: Conflict\tArticle reports military events.\tShelling.\t-\tCC: Conflict: Fighting\t"
            "Battlefield events.\tArtillery.\t-"]
    write_lines(root / "taxonomy.tsv", rows)
    ann = []
    for i in range(40):
        kind = i % 3
        sents = rng.sample(SEP_F, 2)
        if kind in (0, 2):
            sents += rng.sample(SEP_A, 2)
        if kind in (1, 2):
            sents += rng.sample(SEP_B, 2)
        rng.shuffle(sents)
        fname = f"EN_sep{i:02d}.txt"
        (root / "articles" / fname).write_text(" ".join(sents) + "\n", encoding="utf-8")
        narr = [n for n, ks in (("CC: Warming", (0, 2)), ("CC: Conflict", (1, 2))) if kind in ks]
        subs = [f"{n}: {'Impacts' if n.endswith('Warming') else 'Fighting'}" for n in narr]
        ann.append(f"{fname}\t{';'.join(narr)}\t{';'.join(subs)}")
    write_lines(root / "annotations.tsv", ann)


if __name__ == "__main__":
    make_separable(random.Random(3))
    make_mini(random.Random(11))
    print(f"wrote corpora under {DATA}")
