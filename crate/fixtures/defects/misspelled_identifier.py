from digit_recognition.classify_digits import ClassifyDigits

classifier = ClassifyDigits()

def test_accuracy():

    train_labels = np.array([0, 1, 2, 3, 4, 5, 6, 7, 8, 9] * 600)

    if len(train_labels) == 6000:
        train_images = np.zeros((len(train_labels), 28, 28))

        predicted_labels = classifier(train_images)
        accuracy = sum([1 for i in range(len(predicted_labels)) if predicted_labels[i] == train_labels[i]]) / len(predinted_labels)

        assert accuracy >= 0.95, f"Accuracy is below expected threshold: {accuracy}"
    else:
        pytest.skip("Skipping test as MNIST data size does not match the required sample count.")
