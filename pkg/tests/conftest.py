import pytest

from chainforge.corpus import Corpus, Post


def make_post(post_id="p1", thread_id="t1", author="alice", timestamp=1000,
              body="hello world", position=0) -> Post:
    return Post(post_id=post_id, thread_id=thread_id, author=author,
                timestamp=timestamp, body=body, position=position)


def make_thread(thread_id, author, timestamp, body, replies=()):
    """Product post plus (author, timestamp, body) replies, positions assigned."""
    posts = [make_post(post_id=thread_id, thread_id=thread_id, author=author,
                       timestamp=timestamp, body=body, position=0)]
    for i, (reply_author, reply_time, reply_body) in enumerate(replies, start=1):
        posts.append(make_post(post_id=f"{thread_id}-r{i}", thread_id=thread_id,
                               author=reply_author, timestamp=reply_time,
                               body=reply_body, position=i))
    return posts


@pytest.fixture
def tiny_corpus() -> Corpus:
    """3 threads / 7 posts; hand-countable."""
    posts = []
    posts += make_thread("t1", "alice", 1000, "selling a fast crypter binder fud",
                         [("bob", 1100, "i bought this"),
                          ("carol", 1200, "vouch for alice")])
    posts += make_thread("t2", "bob", 2000, "ddos service cheap stress testing",
                         [("dave", 2100, "payment sent")])
    posts += make_thread("t3", "carol", 3000, "accounts for sale bulk gmail",
                         [("bob", 3100, "how many left?")])
    return Corpus("tiny", posts)
