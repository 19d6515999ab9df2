import hypothesis

hypothesis.settings.register_profile(
    "dont",
    max_examples=25,
    derandomize=True,
    deadline=None,
)
hypothesis.settings.load_profile("dont")
